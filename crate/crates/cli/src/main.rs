fn main() {
    // Exit quietly when the reading end of a pipe hangs up (mutagen ... | head).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    std::process::exit(mutagen_cli::dispatch(std::env::args_os()));
}
