fn main() {
    gridtutor::harness::cli_main();
}
