fn main() {
    std::process::exit(wbpomdp_cli::run(std::env::args_os()));
}
