//! `roundlab` experiment driver.
//!
//! Exit codes: 0 ok, 2 infeasible, 3 input error, 4 internal contract violation.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use roundlab::aggregate::{aggregate_best, ComposedFunction};
use roundlab::bfs::{bfs_protocol, Variant};
use roundlab::circuit::{build_ed_circuit, build_pairwise_ed_circuit, BooleanCircuit};
use roundlab::compile::{compile_circuit, ed_protocol, EdCircuit};
use roundlab::expander::{cut_matching_embed, embed_with_search};
use roundlab::mcf::tau_mcf;
use roundlab::oracles::{self, PairStrings};
use roundlab::problems::{
    and_disj_instance, edge_to_node_rebalance, graph_oracle, or_disj_instance,
    DistributedGraphInput, Mode, Query,
};
use roundlab::report::{BoundKind, BoundReport, CSV_HEADER};
use roundlab::sim::{run_protocol, verify_transcript, Protocol, RandomProtocol, Transcript};
use roundlab::steiner::{disjointness_bound, pack_steiner_trees, PackMode};
use roundlab::timed::tau_route;
use roundlab::{Error, Graph};

#[derive(Parser)]
#[command(
    name = "roundlab",
    version,
    about = "Round complexity experiments on small networks",
    arg_required_else_help = true
)]
struct Cli {
    /// Seed for every random choice; echoed in the output.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolName {
    Disj,
    Ed,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum PackArg {
    Greedy,
    Sample,
}

#[derive(Clone, Copy, ValueEnum)]
enum Reduction {
    OrDisj,
    AndDisj,
}

#[derive(Clone, Copy, ValueEnum)]
enum EdKind {
    Sorting,
    Pairwise,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Connectivity,
    Components,
    Acyclicity,
    Bipartiteness,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fewest rounds to ship n bits from a to b.
    TauRoute {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        a: usize,
        #[arg(long)]
        b: usize,
        #[arg(long = "nprime", alias = "n")]
        n: u64,
    },
    /// Fewest rounds for the uniform n'/k exchange between all terminal pairs.
    TauMcf {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long = "nprime", alias = "n")]
        n: f64,
    },
    /// Steiner tree packing with terminal diameter at most delta.
    StPack {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        delta: usize,
        #[arg(long, value_enum, default_value_t = PackArg::Greedy)]
        mode: PackArg,
        /// Builder samples in `sample` mode.
        #[arg(long, default_value_t = 64)]
        samples: usize,
    },
    /// min over delta of n/ST + delta.
    DisjBound {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        n: u64,
    },
    /// Embed an expander on the terminals by the cut-matching game.
    EmbedExpander {
        #[arg(long)]
        graph: PathBuf,
        /// Fixed τ; searched upward from the terminal diameter when absent.
        #[arg(long)]
        tau: Option<usize>,
        #[arg(long = "nprime", alias = "n", default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 8)]
        max_games: usize,
        #[arg(long, default_value_t = 64)]
        max_tau: usize,
    },
    /// Run a protocol on given inputs.
    Run {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_enum)]
        protocol: ProtocolName,
        /// JSON array of 0/1 strings, one per terminal.
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long)]
        max_rounds: Option<usize>,
        /// Round count of the random protocol.
        #[arg(long, default_value_t = 3)]
        rounds: usize,
        /// Print the transcript, one line per bit.
        #[arg(long)]
        dump: bool,
    },
    /// Compile a circuit into a protocol and report its rounds.
    Compile {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        circuit: PathBuf,
        /// Also run it on these inputs and compare with direct evaluation.
        #[arg(long)]
        inputs: Option<PathBuf>,
    },
    /// Emit an element distinctness circuit as JSON.
    EdCircuit {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, value_enum, default_value_t = EdKind::Sorting)]
        kind: EdKind,
    },
    /// Generate a reduction instance from random pair strings.
    Gen {
        #[arg(long, value_enum)]
        reduction: Reduction,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        n: usize,
    },
    /// Solve a distributed graph problem with the BFS protocol.
    Solve {
        #[arg(long, value_enum)]
        variant: VariantArg,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        instance: PathBuf,
    },
    /// Measure protocol rounds against the matching bound.
    Bench {
        #[arg(long, value_enum)]
        function: ProtocolName,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        trials: usize,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Unreachable(..)
            | Error::CutoffExceeded { .. }
            | Error::Routable { .. }
            | Error::Infeasible { .. }
            | Error::DeficientTerminal { .. }
            | Error::RetriesExhausted { .. } => 2,
            Error::InvalidGraph(_)
            | Error::VertexOutOfRange { .. }
            | Error::InvalidSets(_)
            | Error::NotBounded { .. }
            | Error::InvalidInput(_)
            | Error::Parse(_) => 3,
            Error::Solver(_)
            | Error::Contract(_)
            | Error::UnknownBit { .. }
            | Error::MaxRounds { .. } => 4,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 3,
        message: message.into(),
    }
}

type Outcome = std::result::Result<Output, Failure>;

enum Output {
    Value(Value),
    Reports(Vec<BoundReport>),
    Text(String),
}

fn read(path: &Path) -> std::result::Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn load_graph(path: &Path) -> std::result::Result<Graph, Failure> {
    Ok(Graph::parse_any(&read(path)?)?)
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> std::result::Result<T, Failure> {
    serde_json::from_str(&read(path)?).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn load_inputs(path: &Path) -> std::result::Result<Vec<Vec<bool>>, Failure> {
    let raw: Vec<String> = load_json(path)?;
    raw.iter()
        .map(|s| {
            s.chars()
                .map(|c| match c {
                    '0' => Ok(false),
                    '1' => Ok(true),
                    _ => Err(input_error(format!("input strings must be 0/1, got {s:?}"))),
                })
                .collect()
        })
        .collect()
}

fn bits_string(b: &[bool]) -> String {
    b.iter().map(|&x| if x { '1' } else { '0' }).collect()
}

fn run_checked<P: Protocol>(
    g: &Graph,
    p: &P,
    inputs: &[Vec<bool>],
    seed: u64,
    max_rounds: Option<usize>,
) -> std::result::Result<Transcript, Failure> {
    let tr = run_protocol(g, p, inputs, seed, max_rounds)?;
    verify_transcript(g, p, inputs, seed, &tr)?;
    Ok(tr)
}

fn transcript_json(tr: &Transcript) -> Value {
    json!({
        "rounds": tr.rounds,
        "outputs": tr.outputs.iter().map(|(v, o)| (v.to_string(), json!(bits_string(&o.value)))).collect::<serde_json::Map<_, _>>(),
        "total_bits": tr.total_bits(),
        "per_edge_bits": tr.per_edge_bits().iter().map(|(e, c)| (e.to_string(), json!(c))).collect::<serde_json::Map<_, _>>(),
    })
}

fn random_inputs(rng: &mut ChaCha8Rng, k: usize, n: usize) -> Vec<Vec<bool>> {
    (0..k)
        .map(|_| (0..n).map(|_| rng.gen()).collect())
        .collect()
}

fn execute(cli: &Cli) -> Outcome {
    let seed = cli.seed;
    let out = match &cli.cmd {
        Cmd::TauRoute { graph, a, b, n } => {
            let g = load_graph(graph)?;
            json!({ "tau_route": tau_route(&g, *a, *b, *n)?, "a": a, "b": b, "n": n })
        }
        Cmd::TauMcf { graph, n } => {
            let g = load_graph(graph)?;
            json!({ "tau_mcf": tau_mcf(&g, *n)?, "n": n, "k": g.k() })
        }
        Cmd::StPack {
            graph,
            delta,
            mode,
            samples,
        } => {
            let g = load_graph(graph)?;
            let mode = match mode {
                PackArg::Greedy => PackMode::Integral,
                PackArg::Sample => PackMode::SampledFractional { samples: *samples },
            };
            let pk = pack_steiner_trees(&g, *delta, mode, seed)?;
            let trees: Vec<Value> = pk
                .trees
                .iter()
                .map(|t| json!({ "edges": t.tree.edges, "weight": t.weight, "diameter": t.tree.diameter }))
                .collect();
            json!({ "value": pk.value(), "delta": delta, "trees": trees, "diameter_bound": pk.diameter_bound })
        }
        Cmd::DisjBound { graph, n } => {
            let g = load_graph(graph)?;
            let b = disjointness_bound(&g, *n)?;
            return Ok(Output::Reports(vec![BoundReport::new(
                graph.display().to_string(),
                g.k(),
                *n as usize,
                BoundKind::Disjointness,
                b.value,
                0,
                seed,
            )]));
        }
        Cmd::EmbedExpander {
            graph,
            tau,
            n,
            max_games,
            max_tau,
        } => {
            let g = load_graph(graph)?;
            let e = match tau {
                Some(tau) => cut_matching_embed(&g, *tau, *n, seed, *max_games)?,
                None => embed_with_search(&g, *n, seed, *max_games, *max_tau)?,
            };
            let paths: Vec<Value> = e
                .paths
                .iter()
                .map(|(from, to, it, p)| json!({ "from": e.terminals[*from], "to": e.terminals[*to], "iteration": it, "hops": p.hops(&g) }))
                .collect();
            json!({
                "expander_edges": e.expander.edges.iter().map(|&(u, v)| (e.terminals[u], e.terminals[v])).collect::<Vec<_>>(),
                "paths": paths,
                "congestion": e.iteration_congestion,
                "lambda2": e.lambda2,
                "expansion": e.expansion,
                "tau": e.tau,
                "degree": e.degree,
                "games": e.games,
            })
        }
        Cmd::Run {
            graph,
            protocol,
            inputs,
            max_rounds,
            rounds,
            dump,
        } => {
            let g = load_graph(graph)?;
            let inp = load_inputs(inputs)?;
            let n = inp.first().map_or(0, Vec::len);
            let tr = match protocol {
                ProtocolName::Disj => {
                    let agg = aggregate_best(&g, &ComposedFunction::disj(n, g.k()))?;
                    run_checked(&g, &agg.program, &inp, seed, *max_rounds)?
                }
                ProtocolName::Ed => {
                    let p = ed_protocol(&g, n, EdCircuit::Pairwise, seed)?;
                    run_checked(&g, &p.compiled.program, &inp, seed, *max_rounds)?
                }
                ProtocolName::Random => run_checked(
                    &g,
                    &RandomProtocol {
                        seed,
                        rounds: *rounds,
                    },
                    &inp,
                    seed,
                    *max_rounds,
                )?,
            };
            if *dump {
                return Ok(Output::Text(tr.dump()));
            }
            transcript_json(&tr)
        }
        Cmd::Compile {
            graph,
            circuit,
            inputs,
        } => {
            let g = load_graph(graph)?;
            let c = BooleanCircuit::from_json(&read(circuit)?)?;
            let cc = compile_circuit(&g, &c, seed)?;
            let mut v = json!({
                "rounds": cc.total_rounds(),
                "level_rounds": cc.level_rounds,
                "broadcast_rounds": cc.broadcast_rounds,
                "loads": cc.assignment.loads,
                "thresholds": cc.assignment.thresholds,
                "attempts": cc.assignment.attempts,
                "size": c.size(),
                "depth": c.depth(),
            });
            if let Some(path) = inputs {
                let inp = load_inputs(path)?;
                let tr = run_checked(&g, &cc.program, &inp, seed, None)?;
                let got = tr.agreed_output().map(bits_string);
                v["output"] = json!(got);
                v["expected"] = json!(bits_string(&c.eval(&inp)));
            }
            v
        }
        Cmd::EdCircuit { k, m, kind } => {
            let c = match kind {
                EdKind::Sorting => build_ed_circuit(*k, *m)?,
                EdKind::Pairwise => build_pairwise_ed_circuit(*k, *m)?,
            };
            serde_json::to_value(&c).expect("circuit serializes")
        }
        Cmd::Gen { reduction, k, n } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut x = PairStrings::new();
            for u in 0..*k {
                for w in 0..*k {
                    if u != w {
                        x.insert((u, w), (0..*n).map(|_| rng.gen()).collect());
                    }
                }
            }
            let (inst, answer) = match reduction {
                Reduction::OrDisj => (or_disj_instance(&x, *k, *n)?, oracles::or_disj(&x, *k)?),
                Reduction::AndDisj => (and_disj_instance(&x, *k, *n)?, oracles::and_disj(&x, *k)?),
            };
            let mut v = serde_json::to_value(&inst).expect("instance serializes");
            v["strings"] = x
                .iter()
                .map(|(&(u, w), s)| (format!("{},{}", u + 1, w + 1), json!(bits_string(s))))
                .collect::<serde_json::Map<_, _>>()
                .into();
            v["disj_answer"] = json!(answer);
            v
        }
        Cmd::Solve {
            variant,
            graph,
            instance,
        } => {
            let g = load_graph(graph)?;
            let mut inst: DistributedGraphInput = load_json(instance)?;
            inst = DistributedGraphInput::new(inst.h, inst.mode, inst.assignment, inst.k)?;
            let mut rebalance_rounds = 0;
            if inst.mode == Mode::Edge {
                let (node, schedule) = edge_to_node_rebalance(&g, &inst, seed)?;
                rebalance_rounds = schedule.horizon;
                inst = node;
            }
            let (v, q) = match variant {
                VariantArg::Connectivity => (Variant::Connectivity, Query::Connected),
                VariantArg::Components => (Variant::Components, Query::Components),
                VariantArg::Acyclicity => (Variant::Acyclicity, Query::Acyclic),
                VariantArg::Bipartiteness => (Variant::Bipartiteness, Query::Bipartite),
            };
            let p = bfs_protocol(&g, &inst, v, None)?;
            let tr = run_checked(&g, &p, &inst.node_inputs()?, seed, None)?;
            let out = tr
                .agreed_output()
                .ok_or_else(|| Failure::from(Error::Contract("terminals disagree".into())))?;
            json!({
                "answer": p.decode_output(out),
                "oracle": graph_oracle(&inst.h, q),
                "rounds": tr.rounds,
                "rebalance_rounds": rebalance_rounds,
                "total_bits": tr.total_bits(),
            })
        }
        Cmd::Bench {
            function,
            graph,
            n,
            trials,
        } => {
            let g = load_graph(graph)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let name = graph.display().to_string();
            let (kind, bound, rounds) = match function {
                ProtocolName::Disj | ProtocolName::Random => {
                    let f = ComposedFunction::disj(*n, g.k());
                    let agg = aggregate_best(&g, &f)?;
                    let mut worst = 0;
                    for _ in 0..(*trials).max(1) {
                        let inp = random_inputs(&mut rng, g.k(), *n);
                        let tr = run_checked(&g, &agg.program, &inp, seed, None)?;
                        if tr.agreed_output() != Some(&[f.eval(&inp)][..]) {
                            return Err(Error::Contract(
                                "aggregation disagrees with the oracle".into(),
                            )
                            .into());
                        }
                        worst = worst.max(tr.rounds);
                    }
                    (
                        BoundKind::Disjointness,
                        disjointness_bound(&g, *n as u64)?.value,
                        worst,
                    )
                }
                ProtocolName::Ed => {
                    let p = ed_protocol(&g, *n, EdCircuit::Pairwise, seed)?;
                    let mut worst = 0;
                    for _ in 0..(*trials).max(1) {
                        let inp = random_inputs(&mut rng, g.k(), *n);
                        worst = worst
                            .max(run_checked(&g, &p.compiled.program, &inp, seed, None)?.rounds);
                    }
                    (
                        BoundKind::TauMcf,
                        Ratio::from_integer(tau_mcf(&g, 1.0)? as u64),
                        worst,
                    )
                }
            };
            return Ok(Output::Reports(vec![BoundReport::new(
                name,
                g.k(),
                *n,
                kind,
                bound,
                rounds,
                seed,
            )]));
        }
    };
    Ok(Output::Value(out))
}

fn render(out: Output, format: Format, seed: u64) -> String {
    match (out, format) {
        (Output::Text(t), _) => t,
        (Output::Reports(rs), Format::Csv) => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_HEADER).expect("in-memory write");
            for r in &rs {
                w.write_record(r.csv_row()).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8")
        }
        (Output::Reports(rs), Format::Json) => {
            let v = if rs.len() == 1 {
                json!(rs[0])
            } else {
                json!(rs)
            };
            format!(
                "{}\n",
                serde_json::to_string_pretty(&v).expect("report serializes")
            )
        }
        (Output::Value(mut v), format) => {
            if let Some(obj) = v.as_object_mut() {
                obj.insert("seed".into(), json!(seed));
            }
            match format {
                Format::Json => format!(
                    "{}\n",
                    serde_json::to_string_pretty(&v).expect("value serializes")
                ),
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    w.write_record(["key", "value"]).expect("in-memory write");
                    for (key, val) in v.as_object().into_iter().flatten() {
                        let cell = match val {
                            Value::String(s) => s.clone(),
                            other => other.to_string(),
                        };
                        w.write_record([key.as_str(), cell.as_str()])
                            .expect("in-memory write");
                    }
                    String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8")
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(3),
            };
        }
    };
    match execute(&cli) {
        Ok(out) => {
            let text = render(out, cli.format, cli.seed);
            let written = match &cli.out {
                Some(path) => fs::write(path, text),
                None => std::io::stdout().write_all(text.as_bytes()),
            };
            match written {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(3)
                }
            }
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
