//! Command-line front end: parse, partition, plan, then emit, run or verify.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, INTERNAL_ENGINE};
use crate::cost::{CostEstimate, CostMode, CostModel, LeafProfile, Stats};
use crate::emit::{check_round_trip, gamma, split_mappings, write_group_mappings};
use crate::graph::{build_plan_graph, PlanGraph};
use crate::materialize::{execute_tree, ExecOptions, ExecutionReport};
use crate::oracle::{self, GeneratorConfig, VerifyOptions};
use crate::partition::{partition, theorem1_conditions, GroupId, PartitionSet, Theorem1Check};
use crate::planner::generate_bushy_tree;
use crate::rml::{load_mapping_files, DataIntegrationSystem};
use crate::tree::BushyTree;

#[derive(Debug, Parser)]
#[command(name = "kgplan", version, about = "Plan and execute RML mappings as bushy union trees")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Partition the mappings, build the plan graph and tree, write the artifacts.
    Plan(CommonArgs),
    /// Write the shell plan and per-group mapping files for an external engine.
    Emit {
        #[command(flatten)]
        common: CommonArgs,
        /// Reuse a plan.json written by `plan`.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Execute the plan with the built-in engine.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Delay a leaf before it starts, e.g. `G2=5000` (milliseconds).
        #[arg(long = "inject-delay", value_name = "GROUP=MS")]
        inject_delay: Vec<String>,
    },
    /// Compare the greedy plan with every other plan of the same groups.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Check a generated system instead of the given mappings.
        #[arg(long)]
        generate: bool,
        /// With --generate: satisfy the greedy-optimality conditions.
        #[arg(long)]
        theorem1: bool,
        /// Only compare costs, do not execute the plans.
        #[arg(long)]
        cost_only: bool,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Print one planning stage.
    Explain {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        partitions: bool,
        #[arg(long)]
        graph: bool,
        #[arg(long)]
        tree: bool,
    },
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// RML mapping files.
    pub mappings: Vec<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub source_root: Option<PathBuf>,
    #[arg(long)]
    pub engine: Option<String>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    /// Per-leaf timeout in seconds.
    #[arg(long)]
    pub timeout: Option<u64>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub compress: bool,
    #[arg(long, value_parser = parse_cost_mode)]
    pub cost_mode: Option<CostMode>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run every assertion as one group.
    #[arg(long)]
    pub no_partition: bool,
}

fn parse_cost_mode(s: &str) -> Result<CostMode, String> {
    match s.to_ascii_lowercase().as_str() {
        "abstract" | "abstractops" | "abstract-ops" => Ok(CostMode::AbstractOps),
        "measured" | "measuredseconds" | "measured-seconds" => Ok(CostMode::MeasuredSeconds),
        _ => Err(format!("unknown cost mode {s:?} (abstract, measured)")),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Execution(String),
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::Execution(_) => 3,
            CliError::Verification(_) => 4,
        }
    }
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn execution(e: impl std::fmt::Display) -> CliError {
    CliError::Execution(e.to_string())
}

impl CommonArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p).map_err(input)?,
            None => RunConfig::default(),
        };
        if !self.mappings.is_empty() {
            cfg.mapping_paths = self.mappings.clone();
        }
        macro_rules! take {
            ($field:ident, $target:ident) => {
                if let Some(v) = &self.$field {
                    cfg.$target = v.clone();
                }
            };
        }
        if self.source_root.is_some() {
            cfg.source_root = self.source_root.clone();
        }
        take!(engine, engine);
        take!(output, output);
        take!(run_dir, run_dir);
        take!(timeout, timeout_seconds);
        take!(parallelism, parallelism);
        take!(cost_mode, cost_mode);
        take!(seed, seed);
        cfg.compress |= self.compress;
        cfg.no_partition |= self.no_partition;
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

/// What `plan` leaves in the run directory so later commands can skip planning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub mapping_paths: Vec<PathBuf>,
    pub source_root: Option<PathBuf>,
    pub no_partition: bool,
    pub partitions: PartitionSet,
    pub tree: Option<BushyTree>,
}

pub struct Planned {
    pub dis: DataIntegrationSystem,
    pub partitions: PartitionSet,
    pub graph: PlanGraph,
    pub tree: Option<BushyTree>,
    pub theorem1: Theorem1Check,
}

pub fn load_dis(cfg: &RunConfig) -> Result<DataIntegrationSystem, CliError> {
    if cfg.mapping_paths.is_empty() {
        return Err(CliError::Usage("no mapping files given".into()));
    }
    let mut dis = load_mapping_files(&cfg.mapping_paths, cfg.source_root.as_deref()).map_err(input)?;
    dis.load_headers().map_err(input)?;
    Ok(dis)
}

/// Parse, partition and plan.
pub fn plan_pipeline(cfg: &RunConfig) -> Result<Planned, CliError> {
    let dis = load_dis(cfg)?;
    let partitions = if cfg.no_partition {
        PartitionSet::single_group(&dis)
    } else {
        partition(&dis)
    };
    partitions.check_laws(&dis).map_err(execution)?;
    let graph = build_plan_graph(&partitions);
    let tree = generate_bushy_tree(&graph).map(|o| o.tree);
    let theorem1 = theorem1_conditions(&dis);
    Ok(Planned {
        dis,
        partitions,
        graph,
        tree,
        theorem1,
    })
}

fn from_plan_file(path: &Path) -> Result<Planned, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    let file: PlanFile = serde_json::from_str(&text).map_err(|e| input(format!("{}: {e}", path.display())))?;
    let cfg = RunConfig {
        mapping_paths: file.mapping_paths,
        source_root: file.source_root,
        ..RunConfig::default()
    };
    let dis = load_dis(&cfg)?;
    file.partitions.check_laws(&dis).map_err(input)?;
    Ok(Planned {
        graph: build_plan_graph(&file.partitions),
        theorem1: theorem1_conditions(&dis),
        dis,
        partitions: file.partitions,
        tree: file.tree,
    })
}

fn stats_for(cfg: &RunConfig, dis: &DataIntegrationSystem) -> Result<Stats, CliError> {
    let mut stats = Stats::from_sources(dis).map_err(input)?;
    if cfg.cost_mode == CostMode::MeasuredSeconds {
        let path = cfg.run_dir.join("report.json");
        let text = std::fs::read_to_string(&path)
            .map_err(|e| input(format!("measured cost mode needs {}: {e}", path.display())))?;
        let report: ExecutionReport = serde_json::from_str(&text).map_err(input)?;
        stats.measured_seconds = report.leaves.iter().map(|l| (l.node.clone(), l.seconds)).collect();
    }
    Ok(stats)
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| execution(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| execution(format!("{}: {e}", path.display())))
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

pub fn describe_partitions(p: &PartitionSet, dis: &DataIntegrationSystem) -> String {
    let mut out = String::new();
    for g in &p.groups {
        let names = |ids: &std::collections::BTreeSet<crate::rml::AssertionId>| {
            ids.iter().map(|a| format!("{a}:{}", dis.assertion(*a).label())).collect::<Vec<_>>().join(" ")
        };
        let _ = write!(out, "{} {:?} sources=[{}] members=[{}]", g.id, g.kind, g.source_footprint.join(","), names(&g.members));
        if !g.copies.is_empty() {
            let _ = write!(out, " copies=[{}]", names(&g.copies));
        }
        out.push('\n');
    }
    out
}

fn cost_table(c: &CostEstimate) -> String {
    let mut out = String::from("node\tcost\n");
    for (node, v) in &c.breakdown {
        let _ = writeln!(out, "{node}\t{v}");
    }
    let _ = writeln!(out, "total\t{}", c.value);
    out
}

fn cmd_plan(cfg: &RunConfig) -> Result<String, CliError> {
    let planned = plan_pipeline(cfg)?;
    let dir = &cfg.run_dir;
    let mut out = String::new();
    let _ = writeln!(out, "partitions ({}):", planned.partitions.len());
    out.push_str(&describe_partitions(&planned.partitions, &planned.dis));
    let _ = writeln!(out, "plan graph: {} nodes, {} edges", planned.graph.nodes.len(), planned.graph.edge_count());
    match &planned.tree {
        Some(t) => {
            let _ = writeln!(out, "tree: {t}");
        }
        None => out.push_str("tree: empty\n"),
    }
    if !planned.theorem1.met {
        out.push_str("outside greedy-optimality conditions:\n");
        for v in &planned.theorem1.violations {
            let _ = writeln!(out, "  {v}");
        }
    }
    for f in &planned.dis.flags {
        let _ = writeln!(out, "note: {f}");
    }
    let model = CostModel {
        mode: cfg.cost_mode,
        coefficients: cfg.coefficients,
    };
    let cost = match &planned.tree {
        Some(t) => {
            let stats = stats_for(cfg, &planned.dis)?;
            let leaves = model.leaf_profiles(&planned.partitions, &planned.dis, &stats).map_err(input)?;
            Some(model.fu(t, &leaves).map_err(input)?)
        }
        None => None,
    };
    if let Some(c) = &cost {
        out.push_str("cost:\n");
        out.push_str(&cost_table(c));
    }

    write(&dir.join("partitions.json"), &json(&planned.partitions))?;
    write(&dir.join("graph.dot"), &planned.graph.to_dot())?;
    write(
        &dir.join("tree.dot"),
        &planned.tree.as_ref().map_or_else(|| "digraph tree {\n}\n".to_string(), BushyTree::to_dot),
    )?;
    write(&dir.join("cost.json"), &json(&cost))?;
    let file = PlanFile {
        mapping_paths: cfg.mapping_paths.iter().map(|p| std::path::absolute(p).unwrap_or(p.clone())).collect(),
        source_root: cfg.source_root.as_ref().map(|p| std::path::absolute(p).unwrap_or(p.clone())),
        no_partition: cfg.no_partition,
        partitions: planned.partitions,
        tree: planned.tree,
    };
    write(&dir.join("plan.json"), &json(&file))?;
    Ok(out)
}

fn cmd_emit(cfg: &RunConfig, plan: Option<&Path>) -> Result<String, CliError> {
    if cfg.engine == INTERNAL_ENGINE {
        return Err(CliError::Usage("engine `internal` has no physical plan; use `run`".into()));
    }
    let profile = cfg
        .engine_profile(&cfg.engine)
        .ok_or_else(|| CliError::Usage(format!("unknown engine profile {}", cfg.engine)))?;
    let planned = match plan {
        Some(p) => from_plan_file(p)?,
        None => plan_pipeline(cfg)?,
    };
    let Some(tree) = &planned.tree else {
        return Err(input("no mapping assertions to plan"));
    };
    let docs = split_mappings(&planned.partitions, &planned.dis);
    check_round_trip(&planned.partitions, &planned.dis, &docs).map_err(execution)?;
    let run_dir = std::path::absolute(&cfg.run_dir).unwrap_or(cfg.run_dir.clone());
    let output = std::path::absolute(&cfg.output).unwrap_or(cfg.output.clone());
    let files = write_group_mappings(&docs, &run_dir.join("groups")).map_err(execution)?;
    let physical = gamma(tree, &profile, &files, &run_dir, &output).map_err(|e| CliError::Usage(e.to_string()))?;
    let script = physical.write(&run_dir).map_err(execution)?;
    Ok(format!("{}\n", script.display()))
}

fn parse_delays(specs: &[String]) -> Result<BTreeMap<GroupId, Duration>, CliError> {
    let mut out = BTreeMap::new();
    for s in specs {
        let bad = || CliError::Usage(format!("bad --inject-delay {s:?}, expected G<n>=<ms>"));
        let (g, ms) = s.split_once('=').ok_or_else(bad)?;
        let id: u32 = g.strip_prefix('G').and_then(|n| n.parse().ok()).ok_or_else(bad)?;
        let ms: u64 = ms.parse().map_err(|_| bad())?;
        out.insert(GroupId(id), Duration::from_millis(ms));
    }
    Ok(out)
}

fn cmd_run(cfg: &RunConfig, plan: Option<&Path>, delays: &[String]) -> Result<String, CliError> {
    if cfg.engine != INTERNAL_ENGINE {
        return Err(CliError::Usage(format!(
            "`run` uses the built-in engine; use `emit` for {}",
            cfg.engine
        )));
    }
    let inject_delay = parse_delays(delays)?;
    let planned = match plan {
        Some(p) => from_plan_file(p)?,
        None => plan_pipeline(cfg)?,
    };
    let opts = ExecOptions {
        parallelism: cfg.parallelism,
        timeout: Some(Duration::from_secs(cfg.timeout_seconds)),
        compress: cfg.compress,
        memory_threshold: cfg.memory_threshold,
        inject_delay,
    };
    let report = execute_tree(
        planned.tree.as_ref(),
        &planned.partitions,
        &planned.dis,
        &cfg.run_dir.join("nodes"),
        &cfg.output,
        &opts,
    )
    .map_err(execution)?;
    write(&cfg.run_dir.join("report.json"), &json(&report))?;
    Ok(format!(
        "{} triples written to {} ({:.1}% of leaves completed)\n",
        report.final_triples,
        report.output.display(),
        report.completion_percent
    ))
}

fn verify_dis(cfg: &RunConfig, generate: bool, theorem1: bool) -> Result<(DataIntegrationSystem, Option<tempfile::TempDir>), CliError> {
    if !generate {
        return Ok((load_dis(cfg)?, None));
    }
    let dir = tempfile::tempdir().map_err(execution)?;
    let gcfg = GeneratorConfig {
        theorem1,
        ..GeneratorConfig::default()
    };
    let g = oracle::generate(&gcfg, cfg.seed, dir.path()).map_err(execution)?;
    let c = RunConfig {
        mapping_paths: vec![g.mapping],
        ..cfg.clone()
    };
    Ok((load_dis(&c)?, Some(dir)))
}

fn cmd_verify(cfg: &RunConfig, generate: bool, theorem1: bool, cost_only: bool, limit: Option<usize>) -> Result<String, CliError> {
    if cfg.cost_mode != CostMode::AbstractOps {
        return Err(CliError::Usage("verify compares abstract costs only".into()));
    }
    let (dis, _keep) = verify_dis(cfg, generate, theorem1)?;
    let p = if cfg.no_partition {
        PartitionSet::single_group(&dis)
    } else {
        partition(&dis)
    };
    let model = CostModel {
        mode: CostMode::AbstractOps,
        coefficients: cfg.coefficients,
    };
    let stats = Stats::from_sources(&dis).map_err(input)?;
    let leaves: HashMap<GroupId, LeafProfile> = model.leaf_profiles(&p, &dis, &stats).map_err(input)?;
    let work = tempfile::tempdir().map_err(execution)?;
    let opts = VerifyOptions {
        limit: limit.unwrap_or(cfg.enumeration_limit),
        workers: cfg.parallelism,
        work_dir: work.path(),
        cost_only,
    };
    let report = oracle::verify(&dis, &p, &model, &leaves, &opts).map_err(|e| match e {
        oracle::OracleError::TooManyGroups { .. } | oracle::OracleError::Empty => CliError::Input(e.to_string()),
        e => execution(e),
    })?;
    let text = json(&report);
    write(&cfg.run_dir.join("verify.json"), &text)?;
    if !report.equivalent {
        return Err(CliError::Verification(format!("plans disagree:\n{text}")));
    }
    if report.theorem1_conditions_met && report.gap != 0.0 {
        return Err(CliError::Verification(format!("greedy plan is not optimal:\n{text}")));
    }
    Ok(text)
}

fn cmd_explain(cfg: &RunConfig, partitions: bool, graph: bool, tree: bool) -> Result<String, CliError> {
    let planned = plan_pipeline(cfg)?;
    let all = !(partitions || graph || tree);
    let mut out = String::new();
    if partitions || all {
        out.push_str(&describe_partitions(&planned.partitions, &planned.dis));
    }
    if graph || all {
        out.push_str(&planned.graph.to_dot());
    }
    if tree || all {
        match &planned.tree {
            Some(t) => out.push_str(&t.to_text()),
            None => out.push_str("(empty)\n"),
        }
    }
    Ok(out)
}

pub fn execute(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Plan(c) => cmd_plan(&c.resolve()?),
        Command::Emit { common, plan } => cmd_emit(&common.resolve()?, plan.as_deref()),
        Command::Run {
            common,
            plan,
            inject_delay,
        } => cmd_run(&common.resolve()?, plan.as_deref(), inject_delay),
        Command::Verify {
            common,
            generate,
            theorem1,
            cost_only,
            limit,
        } => cmd_verify(&common.resolve()?, *generate, *theorem1, *cost_only, *limit),
        Command::Explain {
            common,
            partitions,
            graph,
            tree,
        } => cmd_explain(&common.resolve()?, *partitions, *graph, *tree),
    }
}

/// Parses `args`, runs the command, prints its output and returns the exit code.
pub fn main_with(args: impl IntoIterator<Item = OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
