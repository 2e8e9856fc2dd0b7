use clap::Parser;

fn main() {
    let args = igabem::xcli::Args::parse();
    std::process::exit(igabem::xcli::run(args));
}
