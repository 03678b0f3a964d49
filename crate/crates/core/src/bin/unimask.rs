use unimask_core::harness::run_command;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(run_command(&args));
}
