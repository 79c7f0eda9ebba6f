//! Subcommand implementations.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use gidag::equivalence::{
    enumerate_class, i_markov_equivalent, semantic_equivalent_oracle, transform_sequence,
    ORACLE_MAX_Q,
};
use gidag::graph::{write_edge_list, Pdag};
use gidag::intervention::ModelStateJson;
use gidag::mcmc::{run_chain, scopes, ChainOutput, ChainSettings, Scope, Tallies};
use gidag::metrics::evaluate;
use gidag::posterior::{
    exact_posterior, total_variation, PosteriorSummary, DIFF_THRESHOLD, EDGE_THRESHOLD,
    TARGET_THRESHOLD,
};
use gidag::score::{BgeScore, MultiEnvDataset};
use gidag::simulate::{gen_truth, simulate_data};
use gidag::ModelState;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{Resolved, RunConfig};
use crate::error::{CliError, Result};
use crate::io::{
    create_dir, format_dataset, format_matrix, ingest, read_json, sha256_file, square,
    write_json, write_text,
};
use crate::{EquivArgs, ExactArgs, FitArgs, ScoreRunArgs, SimulateArgs, SummarizeArgs};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "GIDAG_THREADS";

const SOFTWARE: &str = "gidag";
const VERSION: &str = env!("CARGO_PKG_VERSION");

fn write_report(stdout: &mut dyn Write, value: &Value) -> Result<()> {
    let s = serde_json::to_string_pretty(value).expect("JSON values serialize");
    writeln!(stdout, "{s}").map_err(CliError::io("<stdout>"))
}

fn input_entry(path: &Path) -> Result<Value> {
    Ok(json!({ "path": path.display().to_string(), "sha256": sha256_file(path)? }))
}

fn manifest(command: &str, seed: Option<u64>, inputs: Value, details: Value) -> Value {
    json!({
        "software": SOFTWARE,
        "version": VERSION,
        "command": command,
        "seed": seed,
        "inputs": inputs,
        "details": details,
    })
}

/// Ground truth as stored in `truth.json`; vertices are 1-based inside
/// `state`, coefficient matrices are indexed `[context][from][to]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TruthFile {
    pub q: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    pub n: Vec<usize>,
    pub state: ModelStateJson,
    pub coefficients: Vec<Vec<Vec<f64>>>,
    pub variances: Vec<Vec<f64>>,
}

pub fn simulate(a: &SimulateArgs, stdout: &mut dyn Write) -> Result<()> {
    if a.q < 2 || a.k < 1 || a.k > 64 {
        return Err(CliError::Usage(format!(
            "need --q >= 2 and 1 <= --k <= 64, got q = {}, k = {}",
            a.q, a.k
        )));
    }
    let n = match a.n.len() {
        1 => vec![a.n[0]; a.k],
        len if len == a.k => a.n.clone(),
        len => {
            return Err(CliError::Usage(format!(
                "--n has {len} values; give one or {}",
                a.k
            )))
        }
    };
    let truth = gen_truth(a.q, a.k, a.seed)?;
    let data = simulate_data(&truth.params, &n, a.seed)?;
    create_dir(&a.out)?;
    let data_path = a.out.join("data.csv");
    write_text(&data_path, &format_dataset(&data))?;
    let file = TruthFile {
        q: a.q,
        k: a.k,
        seed: a.seed,
        n: n.clone(),
        state: ModelStateJson::from_state(&truth.state),
        coefficients: truth
            .params
            .coef
            .iter()
            .map(|b| (0..a.q).map(|l| b.row(l).iter().copied().collect()).collect())
            .collect(),
        variances: truth.params.var.clone(),
    };
    write_json(&a.out.join("truth.json"), &file)?;
    let m = manifest(
        "simulate",
        Some(a.seed),
        json!({}),
        json!({ "q": a.q, "K": a.k, "n": n, "outputs": ["data.csv", "truth.json"] }),
    );
    write_json(&a.out.join("manifest.json"), &m)?;
    write_report(stdout, &json!({ "data": data_path.display().to_string() }))
}

/// Worker count: the number of chains, capped by `GIDAG_THREADS` when set
/// and by the available parallelism otherwise.
pub fn thread_count(chains: usize) -> Result<usize> {
    let cap = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t > 0)
            .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer")))?,
        Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    Ok(chains.clamp(1, cap.max(1)))
}

/// Chains of one fit and their pooled tallies.
#[derive(Debug)]
pub struct FitOutput {
    pub chains: Vec<ChainOutput>,
    pub pooled: Tallies,
}

/// Runs `cfg.chains` chains on `threads` workers. Chain `c` uses RNG stream
/// `c`, so results do not depend on the thread count.
pub fn fit_chains(data: &MultiEnvDataset, cfg: &Resolved, threads: usize) -> Result<FitOutput> {
    let base = BgeScore::new(data, cfg.hyper.clone())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let chains: Vec<ChainOutput> = pool.install(|| {
        (0..cfg.chains)
            .into_par_iter()
            .map(|c| {
                let settings = ChainSettings {
                    iterations: cfg.iterations,
                    burn_in: cfg.burn_in,
                    thin: cfg.thin,
                    seed: cfg.seed,
                    stream: c as u64,
                    record_states: cfg.record_states,
                    init: None,
                };
                run_chain(base.clone(), &cfg.priors, &settings)
            })
            .collect::<gidag::Result<Vec<_>>>()
    })?;
    let mut pooled = Tallies::new(data.q(), data.k_count());
    for c in &chains {
        pooled.merge(&c.tallies)?;
    }
    Ok(FitOutput { chains, pooled })
}

/// Writes `ppi_k.csv`, `mpm_k.edges`, `targets.csv`, `diff_k.csv` and
/// `tallies.json` into `dir`. Returns whether each MPM graph is acyclic.
pub fn write_summary(dir: &Path, tallies: &Tallies) -> Result<Vec<bool>> {
    let s = PosteriorSummary::from_tallies(tallies)?;
    let q = s.q;
    let mut acyclic = Vec::with_capacity(s.k_count);
    for k in 0..s.k_count {
        write_text(&dir.join(format!("ppi_{}.csv", k + 1)), &format_matrix(&square(&s.ppi[k], q)))?;
        let m = s.mpm_graph(k);
        let mut text = write_edge_list(&m.graph);
        if !m.acyclic {
            text.insert_str(0, "# acyclic=false\n");
        }
        write_text(&dir.join(format!("mpm_{}.edges", k + 1)), &text)?;
        acyclic.push(m.acyclic);
        if k > 0 {
            write_text(
                &dir.join(format!("diff_{}.csv", k + 1)),
                &format_matrix(&square(&s.diff_prob[k], q)),
            )?;
        }
    }
    let targets: Vec<Vec<f64>> = (0..q)
        .map(|j| (0..s.k_count).map(|k| s.target_prob[k][j]).collect())
        .collect();
    write_text(&dir.join("targets.csv"), &format_matrix(&targets))?;
    write_json(&dir.join("tallies.json"), tallies)?;
    Ok(acyclic)
}

#[derive(Serialize, Deserialize)]
struct CountLine {
    count: u64,
    state: ModelStateJson,
}

fn write_state_counts(path: &Path, counts: &BTreeMap<ModelState, u64>) -> Result<()> {
    let mut s = String::new();
    for (state, &count) in counts {
        let line = CountLine { count, state: ModelStateJson::from_state(state) };
        s.push_str(&serde_json::to_string(&line).expect("state serializes"));
        s.push('\n');
    }
    write_text(path, &s)
}

fn read_state_counts(path: &Path) -> Result<BTreeMap<ModelState, u64>> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let c: CountLine = serde_json::from_str(line)
            .map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        *out.entry(c.state.to_state()?).or_insert(0) += c.count;
    }
    Ok(out)
}

fn write_samples(path: &Path, samples: &[ModelState]) -> Result<()> {
    let mut s = String::new();
    for st in samples {
        s.push_str(&serde_json::to_string(&ModelStateJson::from_state(st)).expect("state serializes"));
        s.push('\n');
    }
    write_text(path, &s)
}

fn read_samples(path: &Path) -> Result<Vec<ModelState>> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let j: ModelStateJson = serde_json::from_str(l)
                .map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
            Ok(j.to_state()?)
        })
        .collect()
}

fn scope_name(s: Scope) -> String {
    match s {
        Scope::Observational => "dag".into(),
        Scope::Context(k) => format!("context_{}", k + 1),
    }
}

fn thresholds() -> Value {
    json!({
        "edge": format!("> {EDGE_THRESHOLD}"),
        "target": format!(">= {TARGET_THRESHOLD}"),
        "diff": format!("> {DIFF_THRESHOLD}"),
    })
}

pub fn fit(a: &FitArgs, stdout: &mut dyn Write) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(c) = a.chains {
        cfg.chains = c;
    }
    if a.iterations.is_some() {
        cfg.iterations = a.iterations;
    }
    if a.burn_in.is_some() {
        cfg.burn_in = a.burn_in;
    }
    if let Some(t) = a.thin {
        cfg.thin = t;
    }
    cfg.record_states |= a.record_states;

    let ing = ingest(&a.data)?;
    for w in &ing.warnings {
        eprintln!("warning: {w}");
    }
    let data = ing.data;
    let resolved = cfg.resolve(data.q())?;
    let threads = thread_count(resolved.chains)?;
    let out = fit_chains(&data, &resolved, threads)?;

    create_dir(&a.out)?;
    let mut chain_info = Vec::new();
    for (c, ch) in out.chains.iter().enumerate() {
        let dir = a.out.join(format!("chain_{}", c + 1));
        create_dir(&dir)?;
        write_summary(&dir, &ch.tallies)?;
        if resolved.thin > 0 {
            write_samples(&dir.join("samples.jsonl"), &ch.samples)?;
        }
        if let Some(counts) = &ch.state_counts {
            write_state_counts(&dir.join("state_counts.jsonl"), counts)?;
        }
        let acceptance: Vec<Value> = scopes(data.k_count())
            .into_iter()
            .zip(&ch.acceptance)
            .map(|(s, st)| {
                json!({ "scope": scope_name(s), "proposed": st.proposed, "accepted": st.accepted })
            })
            .collect();
        chain_info.push(json!({
            "chain": c + 1,
            "stream": c,
            "acceptance": acceptance,
            "final_log_score": ch.final_log_score,
            "final_log_prior": ch.final_log_prior,
        }));
    }
    let acyclic = write_summary(&a.out, &out.pooled)?;
    if resolved.record_states {
        let mut pooled = BTreeMap::new();
        for ch in &out.chains {
            for (s, &n) in ch.state_counts.iter().flatten() {
                *pooled.entry(s.clone()).or_insert(0) += n;
            }
        }
        write_state_counts(&a.out.join("state_counts.jsonl"), &pooled)?;
    }
    let mut inputs = json!({ "data": input_entry(&a.data)? });
    if let Some(p) = &a.config {
        inputs["config"] = input_entry(p)?;
    }
    if let Some(p) = &resolved.wishart_u_path {
        inputs["wishart_U"] = input_entry(p)?;
    }
    let n: Vec<usize> = (0..data.k_count()).map(|k| data.n(k)).collect();
    let m = manifest(
        "fit",
        Some(resolved.seed),
        inputs,
        json!({
            "config": resolved,
            "q": data.q(),
            "K": data.k_count(),
            "n": n,
            "columns": ing.columns,
            "thresholds": thresholds(),
            "mpm_acyclic": acyclic,
            "chains": chain_info,
        }),
    );
    write_json(&a.out.join("manifest.json"), &m)?;
    if acyclic.iter().any(|&x| !x) {
        eprintln!("warning: some MPM graphs contain cycles; see manifest.json");
    }
    write_report(
        stdout,
        &json!({
            "out": a.out.display().to_string(),
            "chains": resolved.chains,
            "post_burn_in_iterations": out.pooled.iterations,
            "mpm_acyclic": acyclic,
        }),
    )
}

fn chain_dirs(run: &Path) -> Vec<PathBuf> {
    let mut dirs = Vec::new();
    for c in 1.. {
        let d = run.join(format!("chain_{c}"));
        if !d.is_dir() {
            break;
        }
        dirs.push(d);
    }
    dirs
}

pub fn summarize(a: &SummarizeArgs, stdout: &mut dyn Write) -> Result<()> {
    let m: Value = read_json(&a.run.join("manifest.json"))?;
    let thin = m["details"]["config"]["thin"].as_u64().unwrap_or(0);
    let dirs = chain_dirs(&a.run);
    if dirs.is_empty() {
        return Err(CliError::Data(format!("{}: no chain directories", a.run.display())));
    }
    let stored: Tallies = read_json(&a.run.join("tallies.json"))?;
    let mut pooled = Tallies::new(stored.q, stored.k_count);
    let mut replayed = 0;
    for d in &dirs {
        let t: Tallies = read_json(&d.join("tallies.json"))?;
        let samples = d.join("samples.jsonl");
        if thin == 1 && samples.is_file() {
            let replay = Tallies::from_samples(t.q, t.k_count, &read_samples(&samples)?);
            if replay != t {
                return Err(CliError::Data(format!(
                    "{}: stored tallies differ from the replayed samples",
                    d.display()
                )));
            }
            replayed += 1;
        }
        write_summary(d, &t)?;
        pooled.merge(&t)?;
    }
    if pooled != stored {
        return Err(CliError::Data(format!(
            "{}: pooled tallies differ from the sum of the chains",
            a.run.display()
        )));
    }
    let acyclic = write_summary(&a.run, &pooled)?;
    write_report(
        stdout,
        &json!({
            "chains": dirs.len(),
            "replayed": replayed,
            "consistent": true,
            "mpm_acyclic": acyclic,
        }),
    )
}

fn pdag_json(p: &Pdag) -> Value {
    let n = p.n();
    let mut directed = Vec::new();
    let mut undirected = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if p.is_directed(u, v) {
                directed.push([u + 1, v + 1]);
            } else if u < v && p.is_undirected(u, v) {
                undirected.push([u + 1, v + 1]);
            }
        }
    }
    json!({ "directed": directed, "undirected": undirected })
}

pub fn equiv(a: &EquivArgs, stdout: &mut dyn Write) -> Result<()> {
    let p1 = read_json::<ModelStateJson>(&a.state)?.to_state()?;
    let report = match &a.other {
        Some(path) => {
            let p2 = read_json::<ModelStateJson>(path)?.to_state()?;
            let equivalent = i_markov_equivalent(&p1, &p2)?;
            let semantic = if p1.q() <= ORACLE_MAX_Q {
                Some(semantic_equivalent_oracle(&p1, &p2)?)
            } else {
                None
            };
            let sequence = if equivalent {
                let seq = transform_sequence(&p1, &p2)?;
                let q = p1.q();
                Some(
                    seq.iter()
                        .map(|r| {
                            let end = |x: usize| if x == q { json!("zeta") } else { json!(x + 1) };
                            json!({ "context": r.context + 1, "from": end(r.u), "to": end(r.v) })
                        })
                        .collect::<Vec<_>>(),
                )
            } else {
                None
            };
            json!({ "equivalent": equivalent, "semantic": semantic, "sequence": sequence })
        }
        None => {
            let class = enumerate_class(&p1)?;
            json!({
                "class_size": class.len(),
                "representatives": class.representatives.iter().map(pdag_json).collect::<Vec<_>>(),
                "members": class.members.iter().map(ModelStateJson::from_state).collect::<Vec<_>>(),
            })
        }
    };
    write_report(stdout, &report)
}

pub fn exact(a: &ExactArgs, stdout: &mut dyn Write) -> Result<()> {
    let ing = ingest(&a.data)?;
    let data = ing.data;
    if data.q() > a.max_q {
        return Err(CliError::Usage(format!(
            "data has q = {} but --max-q is {}",
            data.q(),
            a.max_q
        )));
    }
    let cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let resolved = cfg.resolve(data.q())?;
    let mut scorer = BgeScore::new(&data, resolved.hyper.clone())?;
    let e = exact_posterior(&mut scorer, &resolved.priors)?;
    let tv = match &a.compare {
        Some(run) => {
            let path = run.join("state_counts.jsonl");
            if !path.is_file() {
                return Err(CliError::Data(format!(
                    "{}: no state counts; fit with --record-states",
                    run.display()
                )));
            }
            Some(total_variation(&e, &read_state_counts(&path)?))
        }
        None => None,
    };
    if let Some(out) = &a.out {
        create_dir(out)?;
        let mut s = String::new();
        for ((st, lw), p) in e.states.iter().zip(&e.log_weights).zip(&e.probs) {
            let line = json!({ "prob": p, "log_weight": lw, "state": ModelStateJson::from_state(st) });
            s.push_str(&line.to_string());
            s.push('\n');
        }
        write_text(&out.join("exact.jsonl"), &s)?;
        let mut inputs = json!({ "data": input_entry(&a.data)? });
        if let Some(run) = &a.compare {
            inputs["compare"] = input_entry(&run.join("state_counts.jsonl"))?;
        }
        let m = manifest(
            "exact",
            None,
            inputs,
            json!({ "config": resolved, "states": e.states.len(), "total_variation": tv }),
        );
        write_json(&out.join("manifest.json"), &m)?;
    }
    write_report(stdout, &json!({ "states": e.states.len(), "total_variation": tv }))
}

pub fn score_run(a: &ScoreRunArgs, stdout: &mut dyn Write) -> Result<()> {
    let truth: TruthFile = read_json(&a.truth)?;
    let state = truth.state.to_state()?;
    let tallies: Tallies = read_json(&a.run.join("tallies.json"))?;
    let summary = PosteriorSummary::from_tallies(&tallies)?;
    let report = evaluate(&state, &summary)?;
    write_json(&a.run.join("eval.json"), &report)?;
    write_report(stdout, &serde_json::to_value(&report).expect("report serializes"))
}
