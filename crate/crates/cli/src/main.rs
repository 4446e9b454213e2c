//! `cloudidm`: operator front end for a deployment kept in a state
//! directory. Machine-readable JSON goes to stdout, diagnostics to stderr.

mod commands;
mod config;
mod error;
mod state;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Context;
use crate::config::CliConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "cloudidm", version, about = "Dealer-free identity management over simulated authority parties")]
struct Cli {
    /// Deployment directory (default: ./cloudidm-state).
    #[arg(long, global = true, value_name = "DIR")]
    state: Option<PathBuf>,
    /// JSON configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Base seed for all protocol randomness.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the message transcript as JSON lines.
    #[arg(long, global = true, value_name = "OUT")]
    transcript: Option<PathBuf>,
    /// Current epoch seen by policies, tokens and groups.
    #[arg(long, global = true, default_value_t = 0)]
    epoch: u64,
    /// Step parties concurrently within each round.
    #[arg(long, global = true)]
    parallel: bool,
    /// Parties to treat as crashed for this invocation.
    #[arg(long, global = true, value_delimiter = ',', value_name = "IDS")]
    crash: Vec<u32>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the shared RSA key and initialise every party.
    Setup(SetupArgs),
    /// Enroll an identity record with all live parties.
    Enroll {
        #[arg(long, value_name = "FILE")]
        record: PathBuf,
    },
    /// Issue an attribute key to an enrolled user.
    KeygenUser {
        #[arg(long)]
        user: String,
        #[arg(long, value_delimiter = ',', required = true)]
        attrs: Vec<String>,
        #[arg(long)]
        rank: String,
    },
    /// Seal a user's claims into an active bundle.
    Encrypt(EncryptArgs),
    /// Authorize against a bundle and optionally obtain a token.
    Authn(AuthnArgs),
    /// Derive a child key from a parent key.
    Delegate {
        #[arg(long, value_name = "FILE")]
        parent: PathBuf,
        #[arg(long)]
        child: String,
        #[arg(long, value_delimiter = ',', required = true)]
        attrs: Vec<String>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Revoke a user or one of their attributes.
    Revoke {
        #[arg(long)]
        user: String,
        #[arg(long)]
        attr: Option<String>,
        /// Acting party (default: the maintainer).
        #[arg(long = "as", value_name = "PARTY")]
        acting: Option<u32>,
    },
    /// Sign a token for an authorized session.
    SsoIssue {
        #[arg(long, value_name = "FILE")]
        session: PathBuf,
        #[command(flatten)]
        token: TokenArgs,
    },
    /// Check a token for one audience at `--epoch`.
    SsoVerify {
        #[arg(long, value_name = "FILE")]
        token: PathBuf,
        #[arg(long)]
        audience: String,
    },
    /// Deal a group secret for `--epoch`.
    GroupSetup {
        #[arg(long)]
        group: String,
        #[arg(long, value_delimiter = ',', required = true)]
        members: Vec<String>,
        #[arg(long)]
        threshold: usize,
    },
    /// Present member shares for a group at `--epoch`.
    GroupAuth {
        #[arg(long)]
        group: String,
        /// JSON array of share points.
        #[arg(long, value_name = "FILE")]
        shares: PathBuf,
    },
    /// Deliver a bundle to a host of the given trust level.
    BundleSend {
        #[arg(long, value_name = "FILE")]
        bundle: PathBuf,
        #[arg(long)]
        host: String,
        #[arg(long)]
        trust: f64,
        /// Where to write the bundle as it leaves the host.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Run key generation once per seed and report attempts.
    BenchDkg {
        /// Inclusive range `a..b` or a comma list.
        #[arg(long, default_value = "1..20")]
        seeds: String,
        #[arg(long)]
        bits: Option<u32>,
        #[arg(long)]
        parties: Option<u32>,
        /// Include wall-clock timings (output is then not replayable).
        #[arg(long)]
        timing: bool,
    },
    /// Print one party's secret state. Requires --confirm.
    ExportPartySecret {
        #[arg(long)]
        party: u32,
        #[arg(long)]
        confirm: bool,
    },
}

#[derive(Debug, Args)]
struct SetupArgs {
    #[arg(long)]
    parties: Option<u32>,
    /// Bits per party fragment of p and q.
    #[arg(long)]
    bits: Option<u32>,
}

#[derive(Debug, Args)]
struct EncryptArgs {
    /// Use the record saved when this user enrolled.
    #[arg(long, conflicts_with = "record", required_unless_present = "record")]
    user: Option<String>,
    #[arg(long, value_name = "FILE")]
    record: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    tree: PathBuf,
}

#[derive(Debug, Args)]
struct AuthnArgs {
    #[arg(long, value_name = "FILE")]
    bundle: PathBuf,
    #[arg(long, value_name = "FILE")]
    key: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    labels: Vec<String>,
    /// Declared location.
    #[arg(long)]
    loc: String,
    #[command(flatten)]
    token: TokenArgs,
}

#[derive(Debug, Args)]
struct TokenArgs {
    #[arg(long, value_delimiter = ',')]
    audiences: Vec<String>,
    /// Token lifetime in epochs.
    #[arg(long, default_value_t = 10)]
    ttl: u64,
    /// Use a pseudonymous subject.
    #[arg(long)]
    anonymous: bool,
}

fn run(cli: Cli) -> Result<serde_json::Value, CliError> {
    let config = match &cli.config {
        Some(path) => CliConfig::load(path)?,
        None => CliConfig::default(),
    };
    let state_dir = cli
        .state
        .clone()
        .or_else(|| config.state_dir.clone())
        .unwrap_or_else(|| PathBuf::from("cloudidm-state"));
    let seed = cli.seed.or(config.seed).unwrap_or(0);
    let mut ctx = Context::new(state_dir, config, seed, cli.epoch, cli.parallel, cli.crash, cli.transcript);
    match cli.command {
        Command::Setup(a) => ctx.setup(a.parties, a.bits),
        Command::Enroll { record } => ctx.enroll(&record),
        Command::KeygenUser { user, attrs, rank } => ctx.keygen_user(&user, &attrs, &rank),
        Command::Encrypt(a) => ctx.encrypt(a.user.as_deref(), a.record.as_deref(), &a.tree),
        Command::Authn(a) => ctx.authn(&a.bundle, &a.key, &a.labels, &a.loc, &a.token.into()),
        Command::Delegate { parent, child, attrs, out } => ctx.delegate(&parent, &child, &attrs, out.as_deref()),
        Command::Revoke { user, attr, acting } => ctx.revoke(&user, attr.as_deref(), acting),
        Command::SsoIssue { session, token } => ctx.sso_issue(&session, &token.into()),
        Command::SsoVerify { token, audience } => ctx.sso_verify(&token, &audience),
        Command::GroupSetup { group, members, threshold } => ctx.group_setup(&group, &members, threshold),
        Command::GroupAuth { group, shares } => ctx.group_auth(&group, &shares),
        Command::BundleSend { bundle, host, trust, out } => ctx.bundle_send(&bundle, &host, trust, out.as_deref()),
        Command::BenchDkg { seeds, bits, parties, timing } => ctx.bench_dkg(&seeds, bits, parties, timing),
        Command::ExportPartySecret { party, confirm } => ctx.export_party_secret(party, confirm),
    }
}

impl From<TokenArgs> for commands::TokenOptions {
    fn from(a: TokenArgs) -> Self {
        commands::TokenOptions { audiences: a.audiences, ttl: a.ttl, anonymous: a.anonymous }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(value) => {
            println!("{}", cloudidm::canonical::to_canonical_string(&value));
            ExitCode::SUCCESS
        }
        Err(e) => {
            match &e {
                CliError::Denied(v) => println!("{}", cloudidm::canonical::to_canonical_string(v)),
                other => eprintln!("cloudidm: {other}"),
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
