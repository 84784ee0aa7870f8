//! Command line front end. Exit codes: 0 success, 1 usage, 2 runtime failure.

use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use streetpersona_core::design::RawDesignSpec;
use streetpersona_core::persona::PersonaId;
use streetpersona_core::store::DesignSession;

use crate::api;
use crate::config::{load_config, ConfigOverrides};
use crate::engine::{CreateSession, DesignCreated, Engine};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "streetpersona", version, about = "Evaluate bike-lane redesigns with simulated road-user personas")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// mock or live
    #[arg(long, global = true)]
    backend: Option<String>,
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// Score gap (points) at which personas are flagged as conflicting
    #[arg(long, global = true)]
    threshold: Option<f64>,
    #[arg(long, global = true)]
    max_attempts: Option<u32>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create a session at a location and print the baseline evaluations
    Evaluate {
        #[arg(long, allow_negative_numbers = true)]
        lat: f64,
        #[arg(long, allow_negative_numbers = true)]
        lon: f64,
        #[arg(long, allow_negative_numbers = true)]
        heading: Option<f64>,
        #[arg(long)]
        fov: Option<f64>,
    },
    /// Render and evaluate a design in an existing session
    Design {
        #[arg(long)]
        session: String,
        /// narrow, stay-same or widen
        #[arg(long)]
        width: String,
        /// green or no-paint
        #[arg(long)]
        color: String,
        /// no-buffer, standard, narrow-bollards or narrow-armadillo
        #[arg(long)]
        buffer: String,
        /// parked-cars or moving-cars
        #[arg(long)]
        location: Option<String>,
        #[arg(long)]
        text: Option<String>,
    },
    /// Export a session report
    Report {
        #[arg(long)]
        session: String,
        #[arg(long, default_value = "json")]
        format: String,
    },
    /// Evaluate every "lat,lon" line of a file
    Batch {
        #[arg(long)]
        input: PathBuf,
    },
    /// Run the HTTP server
    Serve {
        #[arg(long)]
        listen: Option<String>,
    },
}

/// Run with the process environment.
pub fn run_cli<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    run_cli_with_env(args, &crate::config::process_env, out, err)
}

pub fn run_cli_with_env<I, S>(
    args: I,
    env: &dyn Fn(&str) -> Option<String>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    EXIT_OK
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    EXIT_USAGE
                }
            };
        }
    };
    let listen = match &cli.command {
        Command::Serve { listen } => listen.clone(),
        _ => None,
    };
    let overrides = ConfigOverrides {
        config_file: cli.global.config.clone(),
        data_dir: cli.global.data_dir.clone(),
        backend: cli.global.backend.clone(),
        listen,
        parallelism: cli.global.parallelism,
        conflict_threshold: cli.global.threshold,
        max_attempts: cli.global.max_attempts,
    };
    let fail = |err: &mut dyn Write, message: String| {
        let _ = writeln!(err, "error: {message}");
        EXIT_RUNTIME
    };
    let config = match load_config(&overrides, env) {
        Ok(c) => c,
        Err(e) => return fail(err, e.to_string()),
    };
    let engine = match Engine::from_config(config) {
        Ok(e) => Arc::new(e),
        Err(e) => return fail(err, e.to_string()),
    };
    let rt = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => return fail(err, e.to_string()),
    };
    rt.block_on(dispatch(cli.command, engine, out, err))
}

async fn dispatch(command: Command, engine: Arc<Engine>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result: Result<String, String> = match command {
        Command::Evaluate { lat, lon, heading, fov } => {
            let req = CreateSession {
                lat,
                lon,
                heading,
                fov,
                radius_m: None,
            };
            engine
                .create_session(&req)
                .await
                .map(|s| format_baseline(&s))
                .map_err(|e| e.to_string())
        }
        Command::Design {
            session,
            width,
            color,
            buffer,
            location,
            text,
        } => {
            let raw = RawDesignSpec {
                lane_width: width,
                lane_color: color,
                buffer_type: buffer,
                buffer_location: location,
                free_text: text,
            };
            engine
                .create_design(&session, &raw)
                .await
                .map(|d| format_design(&d))
                .map_err(|e| e.to_string())
        }
        Command::Report { session, format } => engine
            .report(&session, &format)
            .map(|(_, body)| body)
            .map_err(|e| e.to_string()),
        Command::Batch { input } => return batch(&engine, &input, out, err).await,
        Command::Serve { .. } => {
            return match api::serve(engine).await {
                Ok(()) => EXIT_OK,
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    EXIT_RUNTIME
                }
            }
        }
    };
    match result {
        Ok(text) => {
            let _ = out.write_all(text.as_bytes());
            if !text.ends_with('\n') {
                let _ = out.write_all(b"\n");
            }
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn parse_coords(line: &str) -> Option<(f64, f64)> {
    let mut parts = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|p| !p.is_empty());
    let lat = parts.next()?.parse().ok()?;
    let lon = parts.next()?.parse().ok()?;
    parts.next().is_none().then_some((lat, lon))
}

/// One block per input line, in input order. Failed lines do not stop the
/// batch but make the exit code 2.
async fn batch(engine: &Engine, input: &std::path::Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let text = match std::fs::read_to_string(input) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "error: cannot read {}: {e}", input.display());
            return EXIT_RUNTIME;
        }
    };
    let mut code = EXIT_OK;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let _ = writeln!(out, "== line {}: {line} ==", n + 1);
        let result = match parse_coords(line) {
            None => Err("expected \"lat,lon\"".to_string()),
            Some((lat, lon)) => engine
                .create_session(&CreateSession {
                    lat,
                    lon,
                    heading: None,
                    fov: None,
                    radius_m: None,
                })
                .await
                .map_err(|e| e.to_string()),
        };
        match result {
            Ok(session) => {
                let _ = out.write_all(format_baseline(&session).as_bytes());
            }
            Err(e) => {
                let _ = writeln!(out, "error: {e}");
                let _ = writeln!(err, "line {}: {e}", n + 1);
                code = EXIT_RUNTIME;
            }
        }
        let _ = writeln!(out);
    }
    code
}

fn score_row(out: &mut String, name: &str, s: f64, c: f64, t: f64) {
    let _ = writeln!(out, "{name:<26} {s:>7.1} {c:>8.1} {t:>6.1}");
}

pub fn format_baseline(session: &DesignSession) -> String {
    let mut out = String::new();
    let ctx = &session.context;
    let _ = writeln!(out, "session {} at {}, {}", session.id, ctx.coords.lat, ctx.coords.lon);
    let roads: Vec<String> = ctx.roads.iter().map(|r| format!("{} ({})", r.name, r.road_type)).collect();
    let _ = writeln!(
        out,
        "roads: {}; bike infrastructure: {}",
        if roads.is_empty() { "none".to_string() } else { roads.join(", ") },
        if ctx.has_bike_infrastructure { "yes" } else { "no" }
    );
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<26} {:>7} {:>8} {:>6}", "persona", "safety", "comfort", "total");
    for e in &session.baseline.evaluations {
        score_row(&mut out, e.persona().display_name(), e.safety(), e.comfort(), e.total());
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{}:", PersonaId::Driver.display_name());
    for p in &session.baseline.driver_points {
        let _ = writeln!(out, "  - {p}");
    }
    let summary = &session.baseline.summary;
    let _ = writeln!(out, "driver pros: {}", summary.driver.pros);
    let _ = writeln!(out, "driver cons: {}", summary.driver.cons);
    let _ = writeln!(out, "cyclist pros: {}", summary.cyclist.pros);
    let _ = writeln!(out, "cyclist cons: {}", summary.cyclist.cons);
    out
}

pub fn format_design(created: &DesignCreated) -> String {
    let it = &created.iteration;
    let mut out = String::new();
    let _ = writeln!(out, "design {} in session {}", it.design_id, created.session_id);
    for line in it.spec.describe().lines() {
        let _ = writeln!(out, "  {line}");
    }
    for w in &created.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<26} {:>7} {:>8} {:>6} {:>8} {:>8} {:>8}",
        "persona", "safety", "comfort", "total", "d.safety", "d.comfort", "d.total"
    );
    for e in &it.evaluations {
        let p = e.persona();
        let d = |m| it.delta.get(p, m).unwrap_or(0.0);
        use streetpersona_core::analytics::Metric::*;
        let _ = writeln!(
            out,
            "{:<26} {:>7.1} {:>8.1} {:>6.1} {:>+8.1} {:>+8.1} {:>+8.1}",
            p.display_name(),
            e.safety(),
            e.comfort(),
            e.total(),
            d(Safety),
            d(Comfort),
            d(Total)
        );
    }
    out
}
