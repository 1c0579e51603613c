//! The `bridge` command.

mod client;
mod play;
mod server;

use std::io::IsTerminal;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lightbridge::api::{DeviceStateView, PairResponse, PutStateResponse};
use lightbridge::model::{cue_to_state, Cue, LightState};
use serde_json::json;
use tracing_subscriber::EnvFilter;

use client::{BridgeClient, CliError};

#[derive(Debug, Parser)]
#[command(name = "bridge", version, about = "Smart-light bridge for the spirits ritual")]
struct Cli {
    /// Bridge API base URL used by the client commands.
    #[arg(long, global = true, default_value = "http://127.0.0.1:8080", env = "BRIDGE_API")]
    api: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the bridge API and reconciler.
    Serve(server::ServeArgs),
    /// Run the simulated vendor cloud.
    Simulate(server::SimulateArgs),
    /// Pair a vendor device and print its code.
    Pair {
        #[arg(long)]
        user: String,
        #[arg(long)]
        pass: String,
        #[arg(long)]
        device: String,
    },
    /// Drive a ritual from the terminal.
    Play(play::PlayArgs),
    /// Set a device's desired state to a cue colour.
    Set {
        #[arg(long)]
        code: String,
        #[arg(long, value_enum)]
        cue: Color,
    },
    /// Print a device's desired and reported state.
    Get {
        #[arg(long)]
        code: String,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Color {
    Blue,
    White,
    Green,
    Red,
}

impl Color {
    fn state(self) -> LightState {
        let name = match self {
            Color::Blue => "blue",
            Color::White => "white",
            Color::Green => "green",
            Color::Red => "red",
        };
        let cue = Cue::from_color_name(name).expect("every colour names a cue");
        cue_to_state(cue, LightState::OFF)
    }
}

fn show_state(s: &LightState) -> String {
    format!(
        "power={} hue={} saturation={} brightness={}",
        if s.power { "on" } else { "off" },
        s.hue,
        s.saturation,
        s.brightness
    )
}

async fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Serve(args) => server::serve(args).await,
        Command::Simulate(args) => server::simulate(args).await,
        Command::Pair { user, pass, device } => {
            let resp: PairResponse = BridgeClient::new(&cli.api)
                .post(
                    "/api/pair",
                    &json!({
                        "vendor_username": user,
                        "vendor_password": pass,
                        "vendor_device_id": device,
                    }),
                )
                .await?;
            println!("{}", resp.code);
            Ok(())
        }
        Command::Play(args) => play::play(&cli.api, args).await,
        Command::Set { code, cue } => {
            let resp: PutStateResponse = BridgeClient::new(&cli.api)
                .put(&format!("/api/device/{code}/state"), &cue.state())
                .await?;
            println!("desired_revision {}", resp.desired_revision);
            Ok(())
        }
        Command::Get { code } => {
            let view: DeviceStateView = BridgeClient::new(&cli.api)
                .get(&format!("/api/device/{code}/state"))
                .await?;
            println!("desired  {}", show_state(&view.desired));
            match &view.reported {
                Some(s) => println!("reported {}", show_state(s)),
                None => println!("reported unknown"),
            }
            println!(
                "revision desired={} reported={} in_sync={}",
                view.desired_revision, view.reported_revision, view.in_sync
            );
            Ok(())
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    match run(cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Api(api) => eprintln!("error: {}: {}", api.error_code, api.message),
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
