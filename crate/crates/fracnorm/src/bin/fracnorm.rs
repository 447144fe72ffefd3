fn main() {
    // placeholder; the CLI is wired up in later commits of this session
}
