//! Command-line frontend.
//!
//! Every subcommand prints one JSON record per line (floats with 17
//! significant digits) or, with `--csv`, a flat table. Exit codes are 0 on
//! success, 1 when a solver fails or an invariant is violated, and 2 on a
//! usage or input error.

use crate::capacity::{
    additivity_check, error_floor, gamma, gamma_dual_only, one_shot_enumerate, solve_relaxation,
    Relaxation,
};
use crate::channels::{parse_builtin_spec, random_channel, BroadcastChannel, ChannelSpec, Dims, IN};
use crate::combing::{check_code_from_combing, ppt_combing_fidelity, teleport_sim_identity};
use crate::error::{QbcError, Result};
use crate::fidelity::{solve_fidelity, solve_fidelity_full, CodeClass, FidelityForm};
use crate::oracle::{
    average_input, code_choi_from_kraus, code_choi_from_pair, induced_fidelity, project_one_to_two,
    random_kraus, random_pair, random_unassisted_pair, simulated_fidelity, verify_ns, CodeChoi,
    EncoderDecoderPair,
};
use crate::random::{random_density, random_hermitian, Rng};
use crate::sdp::Solution;
use crate::tensor::{HermitianOperator, SubsystemLayout};
use clap::{Parser, Subcommand, ValueEnum};
use faer::{c64, Mat};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::io::Write;

/// Version string recorded in every result.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Top-level arguments.
#[derive(Debug, Parser)]
#[command(name = "qbc", version, about = "SDP bounds on EPR generation over quantum broadcast channels")]
pub struct Cli {
    /// Print a flat CSV table instead of JSON records.
    #[arg(long, global = true)]
    pub csv: bool,
    /// Subcommand.
    #[command(subcommand)]
    pub command: Command,
}

/// Relaxation selector of `oneshot --relax`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RelaxArg {
    /// `g~`.
    Gtilde,
    /// `h~`.
    Htilde,
    /// `g^`.
    Ghat,
    /// `h^`.
    Hhat,
    /// All four.
    All,
}

/// Verification battery selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    /// Solver-level identities.
    Core,
    /// Checks against explicit codes.
    Oracle,
    /// Both.
    All,
}

/// Subcommands.
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal channel fidelity of a code class at fixed code sizes.
    Fidelity {
        /// Channel: a JSON file or `builtin:<name>,k=v,...`.
        #[arg(long)]
        channel: String,
        /// Bob's code size.
        #[arg(long)]
        r1: usize,
        /// Charlie's code size.
        #[arg(long)]
        r2: usize,
        /// Code class: ns, ppt or ns-ppt.
        #[arg(long)]
        class: CodeClass,
        /// Program form: full, reduced, fm or relaxed.
        #[arg(long, default_value = "full")]
        form: FidelityForm,
    },
    /// One-shot sum-capacity by enumeration, optionally with relaxations.
    Oneshot {
        /// Channel: a JSON file or `builtin:<name>,k=v,...`.
        #[arg(long)]
        channel: String,
        /// Allowed error.
        #[arg(long)]
        eps: f64,
        /// Code class: ns, ppt or ns-ppt.
        #[arg(long, default_value = "ns-ppt")]
        class: CodeClass,
        /// Largest code size per receiver.
        #[arg(long, default_value_t = 2)]
        rmax: usize,
        /// Also solve SDP relaxations.
        #[arg(long, value_enum)]
        relax: Option<RelaxArg>,
    },
    /// Strong-converse quantity Gamma.
    Gamma {
        /// Channel: a JSON file or `builtin:<name>,k=v,...`.
        #[arg(long)]
        channel: String,
        /// Solve only the dual program.
        #[arg(long)]
        dual_only: bool,
        /// Second channel; compares Gamma of the product with the product of
        /// Gammas.
        #[arg(long)]
        tensor_with: Option<String>,
    },
    /// Table of the strong-converse error floor over block lengths.
    Curve {
        /// Channel used to compute Gamma (ignored with `--q-gamma`).
        #[arg(long)]
        channel: Option<String>,
        /// `log2 Gamma` in bits, skipping the solve.
        #[arg(long)]
        q_gamma: Option<f64>,
        /// Largest block length.
        #[arg(long)]
        n_max: u32,
        /// Bob's rate in bits.
        #[arg(long)]
        r1_bits: f64,
        /// Charlie's rate in bits.
        #[arg(long)]
        r2_bits: f64,
    },
    /// PPT-preserving entanglement combing fidelity of a tripartite state.
    Combing {
        /// State: a JSON file or `choi-of:<channel>`.
        #[arg(long)]
        state: String,
        /// Bob's pair size.
        #[arg(long)]
        r1: usize,
        /// Charlie's pair size.
        #[arg(long)]
        r2: usize,
    },
    /// Runs a verification battery.
    Verify {
        /// Battery to run.
        #[arg(long, value_enum, default_value = "all")]
        suite: Suite,
        /// Seed of all random draws.
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

/// Solver diagnostics attached to a record.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct Diagnostics {
    /// Solver status of the last program, if any.
    pub status: Option<String>,
    /// Duality gap of the last program, if any.
    pub gap: Option<f64>,
    /// Total wall time in seconds.
    pub seconds: f64,
}

impl Diagnostics {
    fn from_solution(s: &Solution) -> Self {
        Self {
            status: Some(format!("{:?}", s.status)),
            gap: Some(s.gap),
            seconds: s.seconds,
        }
    }
}

/// One line of output.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ResultRecord {
    /// Subcommand name.
    pub command: String,
    /// Channel or state descriptor.
    pub channel: Option<String>,
    /// Input parameters.
    pub parameters: Value,
    /// Numeric results.
    pub results: Value,
    /// Solver diagnostics.
    pub diagnostics: Diagnostics,
    /// Tool version.
    pub version: String,
    /// Seed, for randomized commands.
    pub seed: Option<u64>,
}

/// A flat table for `--csv`.
#[derive(Clone, Debug, Default)]
pub struct Table {
    /// Column names.
    pub headers: Vec<String>,
    /// Rows.
    pub rows: Vec<Vec<String>>,
}

/// Output of one subcommand.
#[derive(Clone, Debug)]
pub struct Output {
    /// JSON records.
    pub records: Vec<ResultRecord>,
    /// Table for `--csv`.
    pub table: Table,
    /// Set when the command ran but found a violated invariant.
    pub violation: Option<String>,
}

/// JSON formatter writing floats with 17 significant digits.
#[derive(Clone, Copy, Debug, Default)]
pub struct Digits17;

impl serde_json::ser::Formatter for Digits17 {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> std::io::Result<()> {
        if v.is_finite() {
            write!(w, "{v:.16e}")
        } else {
            w.write_all(b"null")
        }
    }
}

/// `v` with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serializes `value` as one line of JSON with [`Digits17`] floats.
pub fn to_json_line<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits17);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// Loads a channel from `builtin:<name>,k=v,...` or a JSON file.
pub fn load_channel(arg: &str) -> Result<BroadcastChannel> {
    if arg.starts_with("builtin:") {
        return parse_builtin_spec(arg);
    }
    let text = std::fs::read_to_string(arg)?;
    ChannelSpec::from_json(&text)?.build()
}

/// JSON description of a tripartite state.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateSpec {
    /// `[|A'|, |B|, |C|]`.
    pub dims: [usize; 3],
    /// Rows of `[re, im]` pairs.
    pub matrix: Vec<Vec<[f64; 2]>>,
}

impl StateSpec {
    /// The state on `(A', B, C)`.
    pub fn build(&self) -> Result<HermitianOperator> {
        let lay = Dims {
            a: self.dims[0],
            b: self.dims[1],
            c: self.dims[2],
        }
        .layout();
        let n = lay.dim();
        if self.matrix.len() != n || self.matrix.iter().any(|r| r.len() != n) {
            return Err(QbcError::DimensionMismatch(format!(
                "state matrix must be {n}x{n} for dims {:?}",
                self.dims
            )));
        }
        let m = Mat::from_fn(n, n, |i, j| c64::new(self.matrix[i][j][0], self.matrix[i][j][1]));
        HermitianOperator::new(lay, m)
    }
}

/// Loads a state from `choi-of:<channel>` or a JSON file.
pub fn load_state(arg: &str) -> Result<HermitianOperator> {
    if let Some(ch) = arg.strip_prefix("choi-of:") {
        return Ok(load_channel(ch)?.choi_state());
    }
    let text = std::fs::read_to_string(arg)?;
    serde_json::from_str::<StateSpec>(&text)?.build()
}

fn record(command: &str, channel: Option<&str>, parameters: Value, results: Value, diagnostics: Diagnostics) -> ResultRecord {
    ResultRecord {
        command: command.into(),
        channel: channel.map(Into::into),
        parameters,
        results,
        diagnostics,
        version: VERSION.into(),
        seed: None,
    }
}

fn key_value_table(results: &Value) -> Table {
    let mut t = Table {
        headers: vec!["key".into(), "value".into()],
        rows: Vec::new(),
    };
    if let Value::Object(map) = results {
        for (k, v) in map {
            let s = match v {
                Value::Number(n) if n.is_f64() => fmt_f64(n.as_f64().unwrap_or(f64::NAN)),
                other => other.to_string(),
            };
            t.rows.push(vec![k.clone(), s]);
        }
    }
    t
}

fn single(rec: ResultRecord) -> Output {
    let table = key_value_table(&rec.results);
    Output {
        records: vec![rec],
        table,
        violation: None,
    }
}

fn cmd_fidelity(channel: &str, r1: usize, r2: usize, class: CodeClass, form: FidelityForm) -> Result<Output> {
    let n = load_channel(channel)?;
    let r = solve_fidelity(&n, r1, r2, class, form)?;
    Ok(single(record(
        "fidelity",
        Some(n.name()),
        json!({"r1": r1, "r2": r2, "class": class, "form": form}),
        json!({"fidelity": r.value}),
        Diagnostics::from_solution(&r.solution),
    )))
}

fn cmd_oneshot(channel: &str, eps: f64, class: CodeClass, rmax: usize, relax: Option<RelaxArg>) -> Result<Output> {
    let n = load_channel(channel)?;
    let r = one_shot_enumerate(&n, eps, class, rmax)?;
    let mut table = Table {
        headers: ["kind", "r1", "r2", "value", "feasible"].map(String::from).to_vec(),
        rows: Vec::new(),
    };
    for g in &r.grid {
        table.rows.push(vec![
            "fidelity".into(),
            g.r1.to_string(),
            g.r2.to_string(),
            fmt_f64(g.fidelity),
            g.feasible.to_string(),
        ]);
    }
    let which: Vec<Relaxation> = match relax {
        None => vec![],
        Some(RelaxArg::Gtilde) => vec![Relaxation::GTilde],
        Some(RelaxArg::Htilde) => vec![Relaxation::HTilde],
        Some(RelaxArg::Ghat) => vec![Relaxation::GHat],
        Some(RelaxArg::Hhat) => vec![Relaxation::HHat],
        Some(RelaxArg::All) => Relaxation::ALL.to_vec(),
    };
    let mut relaxations = serde_json::Map::new();
    let mut seconds = 0.0;
    for w in which {
        let x = solve_relaxation(&n, eps, w)?;
        seconds += x.solution.seconds;
        table.rows.push(vec![
            w.to_string(),
            String::new(),
            String::new(),
            fmt_f64(x.bound_bits),
            String::new(),
        ]);
        relaxations.insert(
            w.to_string(),
            json!({"bound_bits": x.bound_bits, "value": x.value, "t": x.t,
                   "iterations": x.iterations, "converged": x.converged, "history": x.history}),
        );
    }
    let rec = record(
        "oneshot",
        Some(n.name()),
        json!({"eps": eps, "class": class, "rmax": rmax}),
        json!({"q1_sum": r.q1_sum, "grid": r.grid, "achievable_pairs": r.achievable_pairs,
               "pareto_pairs": r.pareto_pairs, "relaxations": relaxations}),
        Diagnostics {
            status: None,
            gap: None,
            seconds,
        },
    );
    Ok(Output {
        records: vec![rec],
        table,
        violation: None,
    })
}

fn cmd_gamma(channel: &str, dual_only: bool, tensor_with: Option<&str>) -> Result<Output> {
    let n = load_channel(channel)?;
    if let Some(other) = tensor_with {
        let m = load_channel(other)?;
        let a = additivity_check(&n, &m)?;
        let mut out = single(record(
            "gamma",
            Some(&format!("{} ⊗ {}", n.name(), m.name())),
            json!({"tensor_with": m.name()}),
            serde_json::to_value(a)?,
            Diagnostics {
                status: None,
                gap: None,
                seconds: a.seconds,
            },
        ));
        if a.relative_deviation > 1e-6 {
            out.violation = Some(format!(
                "Gamma of the product deviates from the product of Gammas by {:e}",
                a.relative_deviation
            ));
        }
        return Ok(out);
    }
    let g = if dual_only { gamma_dual_only(&n)? } else { gamma(&n)? };
    Ok(single(record(
        "gamma",
        Some(n.name()),
        json!({"dual_only": dual_only}),
        json!({"gamma": g.gamma, "q_gamma_bits": g.q_gamma_bits,
               "primal_value": g.primal_value, "dual_value": g.dual_value}),
        Diagnostics {
            status: Some("Optimal".into()),
            gap: g.gap,
            seconds: g.seconds,
        },
    )))
}

fn cmd_curve(channel: Option<&str>, q_gamma: Option<f64>, n_max: u32, r1_bits: f64, r2_bits: f64) -> Result<Output> {
    let (q, name, seconds) = match (q_gamma, channel) {
        (Some(q), _) => (q, None, 0.0),
        (None, Some(c)) => {
            let n = load_channel(c)?;
            let g = gamma_dual_only(&n)?;
            (g.q_gamma_bits, Some(n.name().to_string()), g.seconds)
        }
        (None, None) => {
            return Err(QbcError::InvalidArgument(
                "curve needs --channel or --q-gamma".into(),
            ))
        }
    };
    let mut table = Table {
        headers: vec!["n".into(), "error_floor".into()],
        rows: Vec::new(),
    };
    let mut rows = Vec::new();
    for k in 1..=n_max {
        let f = error_floor(q, k, r1_bits, r2_bits)?;
        table.rows.push(vec![k.to_string(), fmt_f64(f)]);
        rows.push(json!({"n": k, "error_floor": f}));
    }
    let rec = record(
        "curve",
        name.as_deref(),
        json!({"n_max": n_max, "r1_bits": r1_bits, "r2_bits": r2_bits}),
        json!({"q_gamma_bits": q, "table": rows}),
        Diagnostics {
            status: None,
            gap: None,
            seconds,
        },
    );
    Ok(Output {
        records: vec![rec],
        table,
        violation: None,
    })
}

fn cmd_combing(state: &str, r1: usize, r2: usize) -> Result<Output> {
    let rho = load_state(state)?;
    let r = ppt_combing_fidelity(&rho, r1, r2)?;
    let v = r.validate()?;
    let mut out = single(record(
        "combing",
        Some(state),
        json!({"r1": r1, "r2": r2}),
        json!({"fidelity": r.fidelity, "min_eigenvalue": v.min_eigenvalue,
               "tp_deviation": v.tp_deviation, "ppt_min_eigenvalues": v.ppt_min_eigenvalues}),
        Diagnostics::from_solution(&r.solution),
    ));
    if !v.is_valid() {
        out.violation = Some(format!("combing Choi matrix fails validation: {v:?}"));
    }
    Ok(out)
}

/// Outcome of one verification check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckOutcome {
    /// Check name.
    pub name: String,
    /// Whether it passed.
    pub passed: bool,
    /// Measured quantities.
    pub detail: String,
}

fn check(name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckOutcome {
    let (passed, detail) = f().unwrap_or_else(|e| (false, e.to_string()));
    CheckOutcome {
        name: name.into(),
        passed,
        detail,
    }
}

fn qubit_dims() -> Dims {
    Dims { a: 2, b: 2, c: 2 }
}

/// The solver-level battery.
pub fn core_checks(seed: u64) -> Vec<CheckOutcome> {
    use crate::channels::{amplitude_damping_env, identity, replacer};
    let mut out = Vec::new();
    out.push(check("identity NS fidelity (2,1) is 1", || {
        let f = solve_fidelity_full(&identity(2)?, 2, 1, CodeClass::Ns)?.value;
        Ok(((f - 1.0).abs() <= 1e-6, format!("fidelity {f}")))
    }));
    out.push(check("Gamma(identity(2)) is 2", || {
        let g = gamma(&identity(2)?)?.gamma;
        Ok(((g - 2.0).abs() <= 1e-6, format!("gamma {g}")))
    }));
    out.push(check("Gamma(replacer) is 1", || {
        let g = gamma(&replacer(2, 2, 2)?)?.gamma;
        Ok(((g - 1.0).abs() <= 1e-6, format!("gamma {g}")))
    }));
    out.push(check("teleportation identity on random channels", || {
        let mut rng = Rng::seed(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..5 {
            let n = random_channel(&mut rng, qubit_dims(), 2)?;
            for _ in 0..3 {
                let rho = random_density(&mut rng, SubsystemLayout::single(IN, 2));
                worst = worst.max(teleport_sim_identity(&n, &rho)?);
            }
        }
        Ok((worst <= 1e-10, format!("max residual {worst:e}")))
    }));
    out.push(check("reduced form equals full NS form at (2,2)", || {
        let mut rng = Rng::seed(seed ^ 1);
        let n = random_channel(&mut rng, qubit_dims(), 2)?;
        let a = solve_fidelity(&n, 2, 2, CodeClass::Ns, FidelityForm::Full)?.value;
        let b = solve_fidelity(&n, 2, 2, CodeClass::Ns, FidelityForm::Reduced)?.value;
        Ok(((a - b).abs() <= 1e-6, format!("full {a}, reduced {b}")))
    }));
    out.push(check("FM form equals full NS∩PPT form at (2,2)", || {
        let n = amplitude_damping_env(0.3)?;
        let a = solve_fidelity(&n, 2, 2, CodeClass::NsPpt, FidelityForm::Full)?.value;
        let b = solve_fidelity(&n, 2, 2, CodeClass::NsPpt, FidelityForm::Fm)?.value;
        Ok(((a - b).abs() <= 1e-6, format!("full {a}, fm {b}")))
    }));
    out.push(check("maximally mixed 2x2 state combs to 1/2", || {
        let lay = SubsystemLayout::new([(IN, 2), ("B", 2), ("C", 1)])?;
        let f = ppt_combing_fidelity(&HermitianOperator::identity(lay).scale(0.25), 2, 1)?.fidelity;
        Ok(((f - 0.5).abs() <= 1e-6, format!("fidelity {f}")))
    }));
    out.push(check("code fidelity dominates combing fidelity", || {
        let c = check_code_from_combing(&amplitude_damping_env(0.3)?, 2, 1)?;
        Ok((c.margin >= -1e-6, format!("code {}, combing {}", c.code_fidelity, c.combing_fidelity)))
    }));
    out
}

fn random_ns_candidate(rng: &mut Rng, r1: usize, r2: usize, dims: Dims) -> Result<HermitianOperator> {
    let lay = crate::fidelity::code_layout(r1, r2, &dims.layout())?;
    project_one_to_two(&random_hermitian(rng, lay))
}

/// The battery against explicit codes.
pub fn oracle_checks(seed: u64) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    let dims = qubit_dims();
    out.push(check("link product equals composed Kraus Choi", || {
        let mut rng = Rng::seed(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..5 {
            let p = random_pair(&mut rng, 2, 2, dims, 2)?;
            let a = code_choi_from_pair(&p)?;
            let b = code_choi_from_kraus(&p)?;
            worst = worst.max(a.z.sub(&b.z)?.max_abs_entry());
        }
        Ok((worst <= 1e-10, format!("max deviation {worst:e}")))
    }));
    out.push(check("forward-assisted codes are valid and BC-to-A no-signalling", || {
        let mut rng = Rng::seed(seed ^ 2);
        let mut ok = true;
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let c = code_choi_from_pair(&random_pair(&mut rng, 2, 1, dims, 2)?)?;
            let r = verify_ns(&c)?;
            worst = worst.max(r.bc_to_a);
            ok &= c.is_valid() && r.holds()[3];
        }
        Ok((ok, format!("max BC-to-A residual {worst:e}")))
    }));
    out.push(check("unassisted codes satisfy all six conditions", || {
        let mut rng = Rng::seed(seed ^ 3);
        let mut ok = true;
        for _ in 0..5 {
            ok &= verify_ns(&code_choi_from_pair(&random_unassisted_pair(&mut rng, 2, 2, dims)?)?)?.all();
        }
        Ok((ok, "5 codes".into()))
    }));
    out.push(check("one-to-two conditions imply two-to-one", || {
        let mut rng = Rng::seed(seed ^ 4);
        let mut ok = true;
        for _ in 0..5 {
            let z = random_ns_candidate(&mut rng, 2, 2, dims)?;
            let r = verify_ns(&CodeChoi::new(z, 2, 2)?)?;
            ok &= r.one_to_two() && r.two_to_one();
        }
        Ok((ok, "5 projected operators".into()))
    }));
    out.push(check("unassisted codes never beat the SDP", || {
        let mut rng = Rng::seed(seed ^ 5);
        let n = random_channel(&mut rng, dims, 2)?;
        let sdp = solve_fidelity_full(&n, 2, 1, CodeClass::NsPpt)?.value;
        let mut best: f64 = 0.0;
        for _ in 0..20 {
            let c = code_choi_from_pair(&random_unassisted_pair(&mut rng, 2, 1, dims)?)?;
            best = best.max(induced_fidelity(&c, &n)?);
        }
        Ok((best <= sdp + 1e-6, format!("best code {best}, SDP {sdp}")))
    }));
    out.push(check("twirling preserves induced fidelity", || {
        let mut rng = Rng::seed(seed ^ 6);
        let n = random_channel(&mut rng, dims, 2)?;
        let c = code_choi_from_pair(&random_pair(&mut rng, 2, 2, dims, 2)?)?;
        let (a, b) = (induced_fidelity(&c, &n)?, induced_fidelity(&c.twirled()?, &n)?);
        Ok(((a - b).abs() <= 1e-10, format!("before {a}, after {b}")))
    }));
    out.push(check("induced fidelity matches simulated composition", || {
        let mut rng = Rng::seed(seed ^ 7);
        let n = random_channel(&mut rng, dims, 2)?;
        let p = random_pair(&mut rng, 2, 1, dims, 2)?;
        let (a, b) = (induced_fidelity(&code_choi_from_pair(&p)?, &n)?, simulated_fidelity(&p, &n)?);
        Ok(((a - b).abs() <= 1e-10, format!("induced {a}, simulated {b}")))
    }));
    out.push(check("average input ignores the decoder", || {
        let mut rng = Rng::seed(seed ^ 8);
        let p = random_pair(&mut rng, 2, 1, dims, 2)?;
        let dec = random_kraus(&mut rng, 2 * dims.b * dims.c, 2, 2);
        let q = EncoderDecoderPair::new(2, 1, dims, 2, p.encoder().to_vec(), dec)?;
        let a = average_input(&code_choi_from_pair(&p)?)?;
        let b = average_input(&code_choi_from_pair(&q)?)?;
        let c = p.encoder_average_input()?;
        let dev = a.sub(&b)?.max_abs_entry().max(a.sub(&c)?.max_abs_entry());
        Ok((dev <= 1e-10, format!("max deviation {dev:e}")))
    }));
    out
}

fn cmd_verify(suite: Suite, seed: u64) -> Output {
    let mut checks = Vec::new();
    if matches!(suite, Suite::Core | Suite::All) {
        checks.extend(core_checks(seed));
    }
    if matches!(suite, Suite::Oracle | Suite::All) {
        checks.extend(oracle_checks(seed));
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    let violation = (!failed.is_empty()).then(|| format!("failed checks (seed {seed}): {}", failed.join("; ")));
    let table = Table {
        headers: vec!["check".into(), "passed".into(), "detail".into()],
        rows: checks
            .iter()
            .map(|c| vec![c.name.clone(), c.passed.to_string(), c.detail.clone()])
            .collect(),
    };
    let mut rec = record(
        "verify",
        None,
        json!({"suite": format!("{suite:?}").to_lowercase()}),
        json!({"passed": failed.is_empty(), "checks": checks}),
        Diagnostics::default(),
    );
    rec.seed = Some(seed);
    Output {
        records: vec![rec],
        table,
        violation,
    }
}

/// Runs a parsed command.
pub fn execute(cli: &Cli) -> Result<Output> {
    match &cli.command {
        Command::Fidelity {
            channel,
            r1,
            r2,
            class,
            form,
        } => cmd_fidelity(channel, *r1, *r2, *class, *form),
        Command::Oneshot {
            channel,
            eps,
            class,
            rmax,
            relax,
        } => cmd_oneshot(channel, *eps, *class, *rmax, *relax),
        Command::Gamma {
            channel,
            dual_only,
            tensor_with,
        } => cmd_gamma(channel, *dual_only, tensor_with.as_deref()),
        Command::Curve {
            channel,
            q_gamma,
            n_max,
            r1_bits,
            r2_bits,
        } => cmd_curve(channel.as_deref(), *q_gamma, *n_max, *r1_bits, *r2_bits),
        Command::Combing { state, r1, r2 } => cmd_combing(state, *r1, *r2),
        Command::Verify { suite, seed } => Ok(cmd_verify(*suite, *seed)),
    }
}

/// Exit code of an error: 1 for solver failures and violated invariants,
/// 2 for everything caused by the input.
pub fn exit_code(e: &QbcError) -> i32 {
    match e {
        QbcError::Solver(_) | QbcError::InvariantViolated(_) => 1,
        _ => 2,
    }
}

fn render(out: &Output, csv_mode: bool, stdout: &mut impl Write) -> Result<()> {
    if csv_mode {
        let mut w = csv::Writer::from_writer(stdout);
        w.write_record(&out.table.headers).map_err(|e| QbcError::Io(e.into()))?;
        for row in &out.table.rows {
            w.write_record(row).map_err(|e| QbcError::Io(e.into()))?;
        }
        w.flush()?;
    } else {
        for r in &out.records {
            writeln!(stdout, "{}", to_json_line(r)?)?;
        }
    }
    Ok(())
}

/// Parses `argv`, runs the command, writes results to `stdout` and
/// diagnostics to `stderr`, and returns the exit code.
pub fn run<I, T>(argv: I, stdout: &mut impl Write, stderr: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = write!(stderr, "{e}");
            return code;
        }
    };
    match execute(&cli) {
        Ok(out) => {
            if let Err(e) = render(&out, cli.csv, stdout) {
                let _ = writeln!(stderr, "error: {e}");
                return 2;
            }
            match &out.violation {
                Some(v) => {
                    let _ = writeln!(stderr, "invariant violated: {v}");
                    1
                }
                None => 0,
            }
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("qbc").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn fidelity_identity() {
        let (code, out, _) = run_str(&[
            "fidelity", "--channel", "builtin:identity,d=2", "--r1", "2", "--r2", "1", "--class", "ns",
        ]);
        assert_eq!(code, 0);
        let rec: ResultRecord = serde_json::from_str(out.trim()).unwrap();
        let f = rec.results["fidelity"].as_f64().unwrap();
        assert!((f - 1.0).abs() < 1e-6);
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run_str(&["fidelity", "--r1", "2"]).0, 2);
        assert_eq!(run_str(&["gamma", "--channel", "builtin:nonsense"]).0, 2);
        assert_eq!(run_str(&["gamma", "--channel", "/nonexistent/file.json"]).0, 2);
    }

    #[test]
    fn floats_have_seventeen_digits() {
        let s = to_json_line(&json!({"x": 0.1})).unwrap();
        assert_eq!(s, r#"{"x":1.0000000000000001e-1}"#);
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["x"].as_f64().unwrap(), 0.1);
    }

    #[test]
    fn curve_csv() {
        let (code, out, _) = run_str(&[
            "--csv", "curve", "--q-gamma", "1", "--n-max", "3", "--r1-bits", "0.75", "--r2-bits", "0.75",
        ]);
        assert_eq!(code, 0);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "n,error_floor");
        assert_eq!(lines.len(), 4);
    }
}
