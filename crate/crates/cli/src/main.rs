use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use optrec_core::experiments::{
    comment_line, run_oracle_check, run_recovery_case, run_riesz_convergence, run_table, write_case_csv,
    write_convergence_csv, write_field_csv, write_oracle_csv, write_table_csv, Case, ConvergenceConfig,
    ExperimentConfig, OracleConfig, TableSpec,
};
use optrec_core::measurements::write_measurements_csv;
use optrec_core::{build_lshape_mesh, Error, FractionalExponent};

#[derive(Parser)]
#[command(name = "optrec", version, about = "Recovery of harmonic functions on the L-shape from Gaussian measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print mesh sizes, or dump the nodes as CSV.
    MeshInfo {
        #[arg(long)]
        n: u32,
        /// Write `node_id,x,y,kind` rows to this file.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Recover one exact solution and report the relative H1 error.
    Recover {
        #[arg(long, value_parser = parse_case)]
        case: Case,
        /// Boundary smoothness exponent, decimal or ratio such as 7/6.
        #[arg(long, value_parser = parse_exponent)]
        s: FractionalExponent,
        #[arg(long)]
        p: usize,
        #[arg(long)]
        n: u32,
        #[arg(long, default_value_t = 0.25)]
        k: f64,
        /// Per-cell Gauss order for the H1 error.
        #[arg(long, default_value_t = 4)]
        quad: usize,
        /// Per-cell Gauss order for the measurement dual vectors.
        #[arg(long, default_value_t = 2)]
        dual_quad: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the recovered nodal values as CSV.
        #[arg(long)]
        dump_field: Option<PathBuf>,
        /// Write measurement centers and data as CSV.
        #[arg(long)]
        dump_measurements: Option<PathBuf>,
    },
    /// Sweep one of the error tables (2, 3 or 4).
    Table {
        #[arg(long)]
        id: u32,
        #[arg(long, default_value_t = 6)]
        max_n: u32,
        #[arg(long, default_value_t = 0.25)]
        k: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convergence of one representer under refinement.
    RieszConv {
        /// Gaussian center as x,y.
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        z: [f64; 2],
        #[arg(long, value_parser = parse_exponent)]
        s: FractionalExponent,
        #[arg(long, default_value_t = 6)]
        max_n: u32,
        #[arg(long, default_value_t = 8)]
        ref_level: u32,
        #[arg(long, default_value_t = 0.25)]
        k: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sinc quadrature error against the dense spectral solution.
    Oracle {
        #[arg(long)]
        n: u32,
        #[arg(long, value_parser = parse_exponent)]
        s: FractionalExponent,
        /// Comma-separated sinc spacings.
        #[arg(long, value_delimiter = ',', default_value = "1,0.5,0.33,0.25")]
        k_list: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_case(s: &str) -> Result<Case, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_exponent(s: &str) -> Result<FractionalExponent, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_point(s: &str) -> Result<[f64; 2], String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected x,y, got {s:?}"))?;
    let x = a.trim().parse().map_err(|_| format!("bad coordinate {a:?}"))?;
    let y = b.trim().parse().map_err(|_| format!("bad coordinate {b:?}"))?;
    Ok([x, y])
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

/// File writer that starts with the `# optrec` comment line.
fn dump_file(path: &PathBuf, description: &str) -> Result<BufWriter<File>, Error> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", comment_line(description))?;
    Ok(out)
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::MeshInfo { n, dump } => {
            let mesh = build_lshape_mesh(n)?;
            println!("{}", comment_line(&format!("mesh-info n={n}")));
            println!("level,cells,nodes,interior,boundary,mesh_size");
            println!(
                "{},{},{},{},{},{}",
                n,
                mesh.n_cells(),
                mesh.n_dofs(),
                mesh.n_interior(),
                mesh.n_boundary(),
                mesh.mesh_size()
            );
            if let Some(path) = dump {
                mesh.write_csv(dump_file(&path, &format!("mesh n={n}"))?)?;
            }
        }
        Command::Recover { case, s, p, n, k, quad, dual_quad, out, dump_field, dump_measurements } => {
            let mut cfg = ExperimentConfig::new(case, s, p, n);
            cfg.k = k;
            cfg.quad_order = quad;
            cfg.dual_order = dual_quad;
            let result = run_recovery_case(&cfg)?;
            write_case_csv(output(&out)?, &cfg, &result.row)?;
            if let Some(path) = dump_field {
                let file = dump_file(&path, &format!("field {}", cfg.describe()))?;
                write_field_csv(file, &result.discretization, &result.result.u_hat)?;
            }
            if let Some(path) = dump_measurements {
                let file = dump_file(&path, &format!("measurements {}", cfg.describe()))?;
                write_measurements_csv(&result.measurements, &result.omega, file)?;
            }
        }
        Command::Table { id, max_n, k, out } => {
            let spec = TableSpec::new(id, max_n)?;
            let rows = run_table(&spec, k)?;
            write_table_csv(output(&out)?, &format!("table={id} max_n={max_n} k={k}"), &rows)?;
        }
        Command::RieszConv { z, s, max_n, ref_level, k, out } => {
            let mut cfg = ConvergenceConfig::new(z, s);
            cfg.max_n = max_n;
            cfg.reference_level = ref_level;
            cfg.k = k;
            let study = run_riesz_convergence(&cfg)?;
            write_convergence_csv(output(&out)?, &cfg, &study)?;
        }
        Command::Oracle { n, s, k_list, seed, out } => {
            let cfg = OracleConfig { n, s, ks: k_list, seed };
            let study = run_oracle_check(&cfg)?;
            write_oracle_csv(output(&out)?, &cfg, &study)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    faer::set_global_parallelism(faer::Par::Seq);
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_invalid_input() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
