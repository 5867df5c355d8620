fn main() {
    std::process::exit(guardcache::harness::cli::main());
}
