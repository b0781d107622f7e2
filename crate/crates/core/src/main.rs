fn main() {
    std::process::exit(integral_sampler::cli::dispatch(std::env::args_os()));
}
