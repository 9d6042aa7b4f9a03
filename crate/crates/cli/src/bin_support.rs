// Shared by the binaries under src/bin through `#[path]`.

pub fn init_logging() {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
}

pub fn fail(name: &str, message: impl std::fmt::Display, code: i32) -> ! {
    eprintln!("{name}: {message}");
    std::process::exit(code);
}
