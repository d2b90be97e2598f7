fn main() {
    std::process::exit(gstds::cli::main_with(std::env::args_os()));
}
