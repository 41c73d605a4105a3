use clap::Parser;

fn main() {
    let cli = mec_uplink::cli::Cli::parse();
    std::process::exit(mec_uplink::cli::main_with(cli));
}
