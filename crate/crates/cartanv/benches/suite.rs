// Placeholder; filled in once the harness lands.
fn main() {}
