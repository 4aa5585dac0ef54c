fn main() {
    std::process::exit(medsensor::cli::run(std::env::args_os()));
}
