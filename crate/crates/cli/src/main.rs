fn main() {
    std::process::exit(coi_abr_cli::run(std::env::args_os()));
}
