fn main() {
    resilo::cli::main()
}
