use clap::Parser;

fn main() {
    let cli = ergoswitch::cli::Cli::parse();
    std::process::exit(ergoswitch::cli::run(cli));
}
