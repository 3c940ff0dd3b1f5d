fn main() {
    std::process::exit(nl2sql_service::cli::main());
}
