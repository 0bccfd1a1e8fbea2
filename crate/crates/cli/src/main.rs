fn main() {
    let seed = std::env::var("FLMM_SEED").ok();
    std::process::exit(flmm_cli::run(std::env::args_os(), seed.as_deref()));
}
