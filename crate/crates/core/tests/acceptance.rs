//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use roundlab::aggregate::{aggregate_best, steiner_aggregate_protocol, ComposedFunction, Outer};
use roundlab::bfs::{bfs_protocol, Variant};
use roundlab::circuit::{build_ed_circuit, BooleanCircuit, CircuitBuilder, Wire};
use roundlab::compile::{compile_circuit, ed_protocol, EdCircuit};
use roundlab::expander::{
    cut_matching_embed, embed_with_search, expansion, l1_from_uniform, lazy_walk_distribution,
    point_mass, walk_bound, ExpanderEmbedding, EXPANSION_TARGET,
};
use roundlab::graph::families::*;
use roundlab::mcf::{route_bounded_demand, tau_mcf};
use roundlab::oracles::{self, PairStrings};
use roundlab::problems::{
    and_disj_instance, edge_to_node_rebalance, graph_oracle, or_disj_instance, vertex_named,
    Answer, DistributedGraphInput, Mode, ProblemGraph, Query,
};
use roundlab::schedule::DemandMatrix;
use roundlab::sim::{run_protocol, verify_transcript, RandomProtocol};
use roundlab::steiner::{
    build_steiner_tree, builder_diameter_bound, disjointness_bound, matching_with_paths,
    pack_steiner_trees, short_disjoint_paths, PackMode,
};
use roundlab::timed::{extract_level_vector, max_route_flow, tau_route};
use roundlab::twoparty::extract_two_party;
use roundlab::Graph;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>, what: &str) -> Result<T, String> {
    r.map_err(|e| format!("{what}: {e}"))
}

/// All `2^(k·n)` input assignments.
fn all_inputs(k: usize, n: usize) -> impl Iterator<Item = Vec<Vec<bool>>> {
    (0u64..1 << (k * n)).map(move |mask| {
        (0..k)
            .map(|u| (0..n).map(|i| mask >> (u * n + i) & 1 == 1).collect())
            .collect()
    })
}

fn random_inputs(rng: &mut ChaCha8Rng, k: usize, n: usize) -> Vec<Vec<bool>> {
    (0..k)
        .map(|_| (0..n).map(|_| rng.gen()).collect())
        .collect()
}

fn clique_identity() -> Outcome {
    let mut checked = 0;
    for k in 2..=6 {
        for n in 1..=12usize {
            let got = ok(tau_mcf(&clique(k), n as f64), "tau_mcf")?;
            ensure!(
                got == n.div_ceil(k),
                "clique({k}), n'={n}: got {got}, want {}",
                n.div_ceil(k)
            );
            checked += 1;
        }
    }
    Ok(format!("{checked} (k, n') pairs exact"))
}

fn bounded_demand_routing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let n = rng.gen_range(2..=8);
        let k = rng.gen_range(2..=n.min(4));
        let extra = rng.gen_range(0..=4);
        let g = random_connected(&mut rng, n, extra, k);
        let np = rng.gen_range(1..=4u32);
        let mut d = DemandMatrix::zero(k);
        let mut pairs: Vec<(usize, usize)> = (0..k)
            .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        pairs.sort_by_key(|_| rng.gen::<u32>());
        for (i, j) in pairs {
            let room = (np as f64 - d.row_sum(i)).min(np as f64 - d.col_sum(j)) as u32;
            d.add(i, j, rng.gen_range(0..=room) as f64);
        }
        let s = ok(
            route_bounded_demand(&g, &d, np as f64),
            "route_bounded_demand",
        )?;
        ok(s.audit(&g, Some(&d)), &format!("case {case} audit"))?;
        let tau = ok(tau_mcf(&g, np as f64), "tau_mcf")?;
        ensure!(
            s.horizon <= 2 * tau,
            "case {case}: horizon {} > 2·{tau}",
            s.horizon
        );
        ensure!(
            s.max_load(&g) <= 1.0 + 1e-9,
            "case {case}: congestion {}",
            s.max_load(&g)
        );
        if tau > 0 {
            worst = worst.max(s.horizon as f64 / tau as f64);
        }
    }
    Ok(format!("200 demands, worst horizon/tau_mcf = {worst:.2}"))
}

fn sub_additivity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..100 {
        let n = rng.gen_range(2..=7);
        let k = rng.gen_range(2..=n.min(4));
        let extra = rng.gen_range(0..=4);
        let g = random_connected(&mut rng, n, extra, k);
        let (n1, n2) = (rng.gen_range(1..=10u64), rng.gen_range(1..=20u64));
        let factor = n2.div_ceil(n1) as usize;
        let t = g.terminals();
        let (r1, r2) = (
            ok(tau_route(&g, t[0], t[1], n1), "tau_route")?,
            ok(tau_route(&g, t[0], t[1], n2), "tau_route")?,
        );
        ensure!(
            r2 <= factor * r1,
            "case {case}: tau_route({n2}) = {r2} > {factor}·{r1}"
        );
        let (m1, m2) = (
            ok(tau_mcf(&g, n1 as f64), "tau_mcf")?,
            ok(tau_mcf(&g, n2 as f64), "tau_mcf")?,
        );
        ensure!(
            m2 <= factor * m1,
            "case {case}: tau_mcf({n2}) = {m2} > {factor}·{m1}"
        );
    }
    Ok("100 instances, tau_route and tau_mcf".into())
}

fn level_vectors() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut cases = 0;
    let mut draws = 0;
    while cases < 100 {
        draws += 1;
        ensure!(
            draws < 5000,
            "only {cases} applicable cases in {draws} draws"
        );
        let n = rng.gen_range(2..=7);
        let extra = rng.gen_range(0..=5);
        let g = random_connected(&mut rng, n, extra, 2);
        let (a, b) = (g.terminals()[0], g.terminals()[1]);
        let horizon = rng.gen_range(0..=4);
        let need = rng.gen_range(1..=12u64);
        let flow = ok(max_route_flow(&g, a, b, horizon, true), "max_route_flow")?.value;
        if flow >= need {
            continue;
        }
        cases += 1;
        let lv = ok(
            extract_level_vector(&g, a, b, need, horizon),
            "extract_level_vector",
        )?;
        ensure!(
            lv.levels[a] == 0 && lv.levels[b] == horizon + 1,
            "ends at levels {} and {}",
            lv.levels[a],
            lv.levels[b]
        );
        ensure!(
            lv.cost(&g) < need,
            "cost {} not below N = {need}",
            lv.cost(&g)
        );
        ensure!(
            lv.cost(&g) == flow,
            "cost {} differs from the max flow {flow}",
            lv.cost(&g)
        );
    }
    Ok(format!(
        "100 cases ({draws} draws), cost equals max flow on each"
    ))
}

fn two_party_extraction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut max_bits = 0;
    for case in 0..100 {
        let n = rng.gen_range(2..=6);
        let extra = rng.gen_range(0..=3);
        let g = random_connected(&mut rng, n, extra, 2);
        let (a, b) = (g.terminals()[0], g.terminals()[1]);
        let rounds = rng.gen_range(1..=3);
        let p = RandomProtocol {
            seed: rng.gen(),
            rounds,
        };
        let need = ok(max_route_flow(&g, a, b, 2 * rounds, true), "max_route_flow")?.value + 1;
        let lv = ok(
            extract_level_vector(&g, a, b, need, 2 * rounds),
            "extract_level_vector",
        )?;
        for inputs in all_inputs(2, 2) {
            let coins = rng.gen();
            let two = ok(
                extract_two_party(&g, &p, &lv, &inputs, coins),
                &format!("case {case}"),
            )?;
            let run = ok(run_protocol(&g, &p, &inputs, coins, None), "run_protocol")?;
            ensure!(
                two.output_a == run.outputs[&a].value && two.output_b == run.outputs[&b].value,
                "case {case}: outputs differ on {inputs:?}"
            );
            ensure!(
                two.bits.len() as u64 <= 2 * need - 2,
                "case {case}: {} bits > 2N-2 = {}",
                two.bits.len(),
                2 * need - 2
            );
            max_bits = max_bits.max(two.bits.len());
        }
    }
    Ok(format!(
        "100 protocols x 16 inputs, at most {max_bits} two-party bits"
    ))
}

fn matching_and_builder() -> Outcome {
    let mut calls = 0;
    let mut widest = 0.0f64;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        let n = rng.gen_range(4..=12);
        let k = rng.gen_range(2..=n.min(7));
        let extra = rng.gen_range(0..=8);
        let g = random_connected(&mut rng, n, extra, k);
        let terms = g.terminals().to_vec();
        let anchor = terms[0];
        let d = terms
            .iter()
            .map(|&t| g.distance(t, anchor).unwrap())
            .max()
            .unwrap()
            .max(1);
        let mut p = usize::MAX;
        for &t in &terms[1..] {
            p = p.min(
                ok(
                    short_disjoint_paths(&g, t, anchor, d),
                    "short_disjoint_paths",
                )?
                .value(),
            );
        }
        let even = &terms[..terms.len() & !1];
        let m = ok(
            matching_with_paths(&g, even, anchor, p, d, &mut rng),
            "matching_with_paths",
        )?;
        calls += 1;
        ensure!(
            4 * m.pairs.len() >= even.len(),
            "seed {seed}: {} pairs for {} terminals",
            m.pairs.len(),
            even.len()
        );
        ensure!(
            m.paths.paths.iter().all(|q| q.len() <= 16 * d),
            "seed {seed}: path longer than 16·{d}"
        );
        let (tree, rounds) = ok(
            build_steiner_tree(&g, &terms, d, p, &mut rng),
            "build_steiner_tree",
        )?;
        let mut alive = terms.len();
        for r in &rounds {
            calls += 1;
            ensure!(
                4 * r.pairs.len() >= alive & !1,
                "seed {seed}: round matched {} of {alive}",
                r.pairs.len()
            );
            ensure!(
                r.paths.paths.iter().all(|q| q.len() <= 16 * d),
                "seed {seed}: round path longer than 16·{d}"
            );
            alive -= r.pairs.len();
        }
        let cap = builder_diameter_bound(d, k);
        ensure!(
            (tree.diameter as f64) <= cap,
            "seed {seed}: diameter {} > {cap}",
            tree.diameter
        );
        widest = widest.max(tree.diameter as f64 / cap);
    }
    Ok(format!(
        "{calls} matching calls over 100 runs, worst diameter/bound = {widest:.3}"
    ))
}

fn expander_family() -> Vec<(String, Graph)> {
    vec![
        ("clique(4)".into(), clique(4)),
        ("clique(8)".into(), clique(8)),
        ("clique(16)".into(), clique(16)),
        ("ring(2x2)".into(), ring_of_cliques(2, 2)),
        ("ring(2x4)".into(), ring_of_cliques(2, 4)),
        ("ring(4x4)".into(), ring_of_cliques(4, 4)),
    ]
}

const EMBED_SEEDS: u64 = 5;

fn expander_embedding(out: &mut Vec<ExpanderEmbedding>) -> Outcome {
    let mut notes = Vec::new();
    for (name, g) in expander_family() {
        let mut games = Vec::new();
        for seed in 0..EMBED_SEEDS {
            let emb = ok(
                embed_with_search(&g, 1, seed, 8, 16),
                &format!("{name} seed {seed}"),
            )?;
            let phi = ok(expansion(&emb.expander), "expansion")?;
            ensure!(
                phi >= EXPANSION_TARGET,
                "{name} seed {seed}: expansion {phi}"
            );
            ensure!(
                emb.iteration_congestion.iter().all(|&c| c <= 2),
                "{name} seed {seed}: congestion {:?}",
                emb.iteration_congestion
            );
            games.push(emb.games);
            out.push(emb);
        }
        games.sort_unstable();
        let median = games[games.len() / 2];
        ensure!(median <= 3, "{name}: median games {median}");
        notes.push(format!("{name}:{median}"));
    }
    // the fixed-τ entry point agrees on the clique
    ok(
        cut_matching_embed(&clique(4), 1, 1, 0, 8),
        "cut_matching_embed",
    )?;
    Ok(format!("median games {}", notes.join(" ")))
}

fn lazy_walks(embeddings: &[ExpanderEmbedding]) -> Outcome {
    ensure!(!embeddings.is_empty(), "no embeddings to check");
    let mut checks = 0;
    let mut tightest = f64::INFINITY;
    for emb in embeddings {
        let x = &emb.expander;
        let d = x.regular_degree().ok_or("expander is not regular")?;
        for v in 0..x.k {
            let mut p = point_mass(x.k, v);
            for t in 1..=40 {
                p = ok(lazy_walk_distribution(x, &p, 1), "lazy walk")?;
                let (dist, bound) = (l1_from_uniform(&p), walk_bound(x.k, emb.lambda2, d, t));
                ensure!(
                    dist <= bound + 1e-9,
                    "k={} v={v} T={t}: {dist} > {bound}",
                    x.k
                );
                tightest = tightest.min(bound - dist);
                checks += 1;
            }
        }
    }
    Ok(format!(
        "{checks} (expander, start, T) checks, min slack {tightest:.2e}"
    ))
}

/// Random circuit with `levels` layers of random binary gates.
fn random_circuit(rng: &mut ChaCha8Rng, n: usize, k: usize, levels: usize) -> BooleanCircuit {
    let mut b = CircuitBuilder::new(n, k);
    let mut wires: Vec<Wire> = (0..k)
        .flat_map(|u| (0..n).map(move |i| (u, i)))
        .map(|(u, i)| b.input(u, i))
        .collect();
    for _ in 0..levels {
        let width = rng.gen_range(1..=4);
        let mut next = Vec::new();
        for _ in 0..width {
            let (x, y) = (
                wires[rng.gen_range(0..wires.len())],
                wires[rng.gen_range(0..wires.len())],
            );
            next.push(match rng.gen_range(0..4) {
                0 => b.and(x, y),
                1 => b.or(x, y),
                2 => b.xor(x, y),
                _ => b.not(x),
            });
        }
        wires.extend(next.iter().copied());
        wires = wires.split_off(wires.len().saturating_sub(6));
    }
    let outs: Vec<Wire> = wires.iter().rev().take(2).copied().collect();
    b.finish(&outs)
}

fn circuit_hosts(k: usize) -> Vec<(&'static str, Graph)> {
    match k {
        2 => vec![("path(2)", path(2)), ("bundle(2)", bundle(2))],
        3 => vec![("star(3)", star(3)), ("cycle(3)", cycle(3))],
        _ => vec![
            ("clique(4)", clique(4)),
            ("cycle(4)", cycle(4)),
            ("grid(3,3)", grid(3, 3)),
        ],
    }
}

fn circuit_compiler() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut jobs: Vec<(String, BooleanCircuit)> = Vec::new();
    for k in 2..=4 {
        for m in 1..=3 {
            jobs.push((
                format!("ed(k={k},m={m})"),
                ok(build_ed_circuit(k, m), "build_ed_circuit")?,
            ));
        }
        for n in 1..=12 / k {
            jobs.push((
                format!("random(k={k},n={n})"),
                random_circuit(&mut rng, n, k, 4),
            ));
        }
    }
    let mut runs = 0usize;
    for (name, c) in &jobs {
        let hosts = circuit_hosts(c.k);
        // the larger cases go to a single host to keep the suite quick
        let hosts = if c.n * c.k > 8 {
            &hosts[..1]
        } else {
            &hosts[..]
        };
        for (gname, g) in hosts {
            let cc = ok(
                compile_circuit(g, c, rng.gen()),
                &format!("{name} on {gname}"),
            )?;
            ensure!(
                ok(cc.within_bound(g, cc.total_rounds()), "round bound")?,
                "{name} on {gname}: {} rounds over the bound",
                cc.total_rounds()
            );
            for inputs in all_inputs(c.k, c.n) {
                let tr = ok(run_protocol(g, &cc.program, &inputs, 0, None), "run")?;
                ensure!(
                    tr.agreed_output() == Some(&c.eval(&inputs)[..]),
                    "{name} on {gname}: mismatch on {inputs:?}"
                );
                ensure!(
                    tr.rounds <= cc.total_rounds(),
                    "{name} on {gname}: ran {} > {}",
                    tr.rounds,
                    cc.total_rounds()
                );
                runs += 1;
            }
        }
    }
    Ok(format!(
        "{} circuits, {runs} exhaustive runs, zero mismatches",
        jobs.len()
    ))
}

fn steiner_aggregation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let hosts: Vec<(&str, Graph)> = vec![
        ("bundle(2)", bundle(2)),
        ("path(3)", path(3)),
        ("star(3)", star(3)),
        ("cycle(3)", cycle(3)),
        ("clique(4)", clique(4)),
        ("grid(3,3)", grid(3, 3)),
    ];
    let mut runs = 0usize;
    for (gname, g) in &hosts {
        let k = g.k();
        for n in 1..=12 / k {
            let table = (0..1usize << n).map(|_| rng.gen()).collect();
            let inner = (0..n)
                .map(|_| (0..=k).map(|_| rng.gen()).collect())
                .collect();
            let fs = [
                ComposedFunction::disj(n, k),
                ComposedFunction::majority_parity(n, k),
                ok(
                    ComposedFunction::new(n, k, Outer::Table(table), inner),
                    "table function",
                )?,
            ];
            for f in &fs {
                let mut protocols = vec![ok(aggregate_best(g, f), "aggregate_best")?];
                for delta in 1..=g.vertex_count() {
                    let pk = ok(pack_steiner_trees(g, delta, PackMode::Integral, 0), "pack")?;
                    if !pk.trees.is_empty() {
                        protocols.push(ok(steiner_aggregate_protocol(g, &pk, f), "aggregate")?);
                    }
                }
                for agg in &protocols {
                    ensure!(
                        agg.tree_rounds.iter().all(|&r| r <= agg.tree_bound()),
                        "{gname} n={n}: tree rounds {:?} over {}",
                        agg.tree_rounds,
                        agg.tree_bound()
                    );
                    for inputs in all_inputs(k, n) {
                        let tr = ok(run_protocol(g, &agg.program, &inputs, 0, None), "run")?;
                        ensure!(
                            tr.agreed_output() == Some(&[f.eval(&inputs)][..]),
                            "{gname} n={n} {:?}: wrong on {inputs:?}",
                            f.outer
                        );
                        runs += 1;
                    }
                }
            }
        }
    }
    Ok(format!(
        "{runs} exhaustive runs over DISJ, majority parity and random tables"
    ))
}

fn pair_strings(k: usize, bits: &[bool], n: usize) -> PairStrings {
    let mut x = PairStrings::new();
    let mut it = bits.chunks(n);
    for u in 0..k {
        for w in 0..k {
            if u != w {
                x.insert((u, w), it.next().unwrap().to_vec());
            }
        }
    }
    x
}

fn strings(table: &[((usize, usize), &str)]) -> PairStrings {
    table
        .iter()
        .map(|&((u, w), s)| ((u - 1, w - 1), s.chars().map(|c| c == '1').collect()))
        .collect()
}

fn check_reductions(x: &PairStrings, k: usize, n: usize) -> Result<(), String> {
    let or = ok(or_disj_instance(x, k, n), "or instance")?;
    let want = ok(oracles::or_disj(x, k), "or oracle")?;
    ensure!(
        graph_oracle(&or.h, Query::Triangle) == Answer::Flag(want),
        "triangle test disagrees with OR-DISJ = {want} on {x:?}"
    );
    if !want {
        ensure!(
            graph_oracle(&or.h, Query::Acyclic) == Answer::Flag(true),
            "negative OR-DISJ instance is not a forest: {x:?}"
        );
    }
    let and = ok(and_disj_instance(x, k, n), "and instance")?;
    let want = ok(oracles::and_disj(x, k), "and oracle")?;
    ensure!(
        graph_oracle(&and.h, Query::Connected) == Answer::Flag(want),
        "connectivity disagrees with AND-DISJ = {want} on {x:?}"
    );
    Ok(())
}

fn triangles(h: &ProblemGraph) -> Vec<[usize; 3]> {
    let adj = h.adjacency();
    let mut out = Vec::new();
    for a in 0..h.n {
        for &b in adj[a].iter().filter(|&&b| b > a) {
            for &c in adj[b].iter().filter(|&&c| c > b) {
                if adj[a].contains(&c) {
                    out.push([a, b, c]);
                }
            }
        }
    }
    out
}

fn component_sets(h: &ProblemGraph) -> Vec<Vec<usize>> {
    let adj = h.adjacency();
    let mut seen = vec![false; h.n];
    let mut out = Vec::new();
    for s in 0..h.n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![s];
        let mut i = 0;
        while i < comp.len() {
            for &w in &adj[comp[i]] {
                if !seen[w] {
                    seen[w] = true;
                    comp.push(w);
                }
            }
            i += 1;
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

fn reductions() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut exhaustive = 0usize;
    let mut sweeps = 0usize;
    for k in 2..=4 {
        for n in 1..=3 {
            let total = k * (k - 1) * n;
            if total <= 12 {
                for mask in 0u64..1 << total {
                    let bits: Vec<bool> = (0..total).map(|i| mask >> i & 1 == 1).collect();
                    check_reductions(&pair_strings(k, &bits, n), k, n)?;
                    exhaustive += 1;
                }
                continue;
            }
            // every value of one pair's two strings, over many settings of the rest
            for (u, w) in (0..k).flat_map(|u| (u + 1..k).map(move |w| (u, w))) {
                for bg in 0..24 {
                    let mut base: Vec<bool> = (0..total).map(|_| rng.gen()).collect();
                    if bg == 0 {
                        base.iter_mut().for_each(|b| *b = false);
                    }
                    if bg == 1 {
                        base.iter_mut().for_each(|b| *b = true);
                    }
                    let mut x = pair_strings(k, &base, n);
                    for mask in 0u64..1 << (2 * n) {
                        x.insert((u, w), (0..n).map(|i| mask >> i & 1 == 1).collect());
                        x.insert((w, u), (0..n).map(|i| mask >> (n + i) & 1 == 1).collect());
                        check_reductions(&x, k, n)?;
                        sweeps += 1;
                    }
                }
            }
        }
    }

    let triangle_case = strings(&[
        ((1, 2), "101"),
        ((2, 1), "010"),
        ((1, 3), "110"),
        ((3, 1), "001"),
        ((2, 3), "011"),
        ((3, 2), "010"),
    ]);
    let inp = ok(or_disj_instance(&triangle_case, 3, 3), "triangle example")?;
    let tri = triangles(&inp.h);
    let mut want: Vec<usize> = ["y2,3", "y3,2", "x2{2,3}"]
        .iter()
        .map(|s| vertex_named(&inp, s).unwrap())
        .collect();
    want.sort_unstable();
    ensure!(
        tri.len() == 1 && tri[0].to_vec() == want,
        "triangle example: triangles {tri:?}, want {want:?}"
    );
    ensure!(
        oracles::or_disj(&triangle_case, 3) == Ok(true),
        "triangle example: OR-DISJ should be 1"
    );

    let two_part_case = strings(&[
        ((1, 2), "011"),
        ((2, 1), "100"),
        ((2, 3), "010"),
        ((3, 2), "011"),
        ((1, 3), "111"),
        ((3, 1), "001"),
    ]);
    let inp = ok(
        and_disj_instance(&two_part_case, 3, 3),
        "two-component example",
    )?;
    let mut blue: Vec<usize> = ["l{1,2}", "x2{1,2}", "x3{1,2}"]
        .iter()
        .map(|s| vertex_named(&inp, s).unwrap())
        .collect();
    blue.sort_unstable();
    let comps = component_sets(&inp.h);
    ensure!(
        comps.len() == 2 && comps.contains(&blue),
        "two-component example: components {comps:?}, blue {blue:?}"
    );
    ensure!(
        oracles::and_disj(&two_part_case, 3) == Ok(false),
        "two-component example: AND-DISJ should be 0"
    );

    Ok(format!(
        "{exhaustive} exhaustive + {sweeps} per-pair sweeps; both worked examples match"
    ))
}

fn random_instance(rng: &mut ChaCha8Rng, k: usize) -> DistributedGraphInput {
    let n = rng.gen_range(1..=24);
    let p: f64 = [0.05, 0.1, 0.2, 0.4][rng.gen_range(0..4)];
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .filter(|_| rng.gen_bool(p))
        .collect();
    let h = ProblemGraph::new(n, edges).unwrap();
    if rng.gen_bool(0.25) && !h.edges.is_empty() {
        let assignment = (0..h.edges.len()).map(|_| rng.gen_range(0..k)).collect();
        DistributedGraphInput::new(h, Mode::Edge, assignment, k).unwrap()
    } else {
        let assignment = (0..n).map(|_| rng.gen_range(0..k)).collect();
        DistributedGraphInput::new(h, Mode::Node, assignment, k).unwrap()
    }
}

fn bfs_family() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let variants = [
        (Variant::Connectivity, Query::Connected),
        (Variant::Components, Query::Components),
        (Variant::Acyclicity, Query::Acyclic),
        (Variant::Bipartiteness, Query::Bipartite),
    ];
    let mut edge_mode = 0;
    for case in 0..200 {
        let vg = rng.gen_range(2..=6);
        let k = rng.gen_range(1..=vg.min(4));
        let extra = rng.gen_range(0..=3);
        let g = random_connected(&mut rng, vg, extra, k);
        let mut inp = random_instance(&mut rng, k);
        if inp.mode == Mode::Edge {
            edge_mode += 1;
            let (node, schedule) = ok(edge_to_node_rebalance(&g, &inp, rng.gen()), "rebalance")?;
            ok(schedule.audit(&g, None), "rebalance audit")?;
            ensure!(node.h == inp.h, "case {case}: rebalancing changed H");
            inp = node;
        }
        let blocks = ok(inp.node_inputs(), "node inputs")?;
        for (v, q) in variants {
            let p = ok(bfs_protocol(&g, &inp, v, None), "bfs_protocol")?;
            let tr = ok(
                run_protocol(&g, &p, &blocks, 0, None),
                &format!("case {case} {v:?}"),
            )?;
            if case % 20 == 0 {
                ok(
                    verify_transcript(&g, &p, &blocks, 0, &tr),
                    "transcript audit",
                )?;
            }
            let out = tr
                .agreed_output()
                .ok_or(format!("case {case} {v:?}: terminals disagree"))?;
            let want = graph_oracle(&inp.h, q);
            ensure!(
                p.decode_output(out) == want,
                "case {case} {v:?}: got {:?}, oracle {want:?}",
                p.decode_output(out)
            );
        }
    }
    Ok(format!(
        "200 instances ({edge_mode} rebalanced from edge mode) x 4 variants, zero mismatches"
    ))
}

fn curated() -> Vec<(&'static str, Graph)> {
    vec![
        ("path(1)", path(1)),
        ("path(2)", path(2)),
        ("path(3)", path(3)),
        ("path(5)", path(5)),
        ("cycle(3)", cycle(3)),
        ("cycle(4)", cycle(4)),
        ("cycle(5)", cycle(5)),
        ("cycle(6)", cycle(6)),
        ("grid(2,2)", grid(2, 2)),
        ("grid(2,4)", grid(2, 4)),
        ("grid(3,3)", grid(3, 3)),
        ("grid(4,4)", grid(4, 4)),
        ("clique(2)", clique(2)),
        ("clique(3)", clique(3)),
        ("clique(4)", clique(4)),
        ("clique(5)", clique(5)),
        ("clique(6)", clique(6)),
        ("bundle(1)", bundle(1)),
        ("bundle(2)", bundle(2)),
        ("bundle(4)", bundle(4)),
    ]
}

const SANDWICH_N: usize = 8;

fn sandwich(report: &mut BTreeMap<&'static str, String>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst_disj = 0.0f64;
    let mut worst_ed = 0.0f64;
    for (name, g) in curated() {
        let n = SANDWICH_N;
        let factor = 8.0 * ((g.vertex_count() * n) as f64).log2().powi(2);

        let f = ComposedFunction::disj(n, g.k());
        let agg = ok(aggregate_best(&g, &f), name)?;
        let bound = ok(disjointness_bound(&g, n as u64), name)?.value;
        let mut disj_rounds = 0;
        for _ in 0..3 {
            let inputs = random_inputs(&mut rng, g.k(), n);
            let tr = ok(run_protocol(&g, &agg.program, &inputs, 0, None), name)?;
            ok(verify_transcript(&g, &agg.program, &inputs, 0, &tr), name)?;
            ensure!(
                tr.agreed_output() == Some(&[f.eval(&inputs)][..]),
                "{name}: DISJ wrong"
            );
            disj_rounds = disj_rounds.max(tr.rounds);
        }
        let r = Ratio::from_integer(disj_rounds as u64) / bound;
        let r = *r.numer() as f64 / *r.denom() as f64;
        ensure!(
            r <= factor && 1.0 / r <= factor,
            "{name}: DISJ {disj_rounds} rounds vs bound {bound}, factor {factor:.1}"
        );
        worst_disj = worst_disj.max(r);

        let tau1 = ok(tau_mcf(&g, 1.0), name)?;
        let ed = ok(ed_protocol(&g, n, EdCircuit::Pairwise, rng.gen()), name)?;
        let mut ed_rounds = 0;
        for t in 0..3 {
            let mut inputs = random_inputs(&mut rng, g.k(), n);
            if t == 0 {
                inputs[g.k() - 1] = inputs[0].clone();
            }
            let tr = ok(
                run_protocol(&g, &ed.compiled.program, &inputs, 0, None),
                name,
            )?;
            ok(
                verify_transcript(&g, &ed.compiled.program, &inputs, 0, &tr),
                name,
            )?;
            let got = tr
                .agreed_output()
                .ok_or(format!("{name}: ED outputs disagree"))?;
            // hashing can only merge values, so distinct hashes imply distinct inputs
            let truth = oracles::ed(&inputs);
            ensure!(!got[0] || truth, "{name}: ED accepted colliding inputs");
            if ed.hash.is_none() {
                ensure!(got[0] == truth, "{name}: ED wrong without hashing");
            }
            ed_rounds = ed_rounds.max(tr.rounds);
        }
        let r = ed_rounds as f64 / tau1 as f64;
        ensure!(
            r <= factor && 1.0 / r <= factor,
            "{name}: ED {ed_rounds} rounds vs tau_mcf(1) = {tau1}, factor {factor:.1}"
        );
        worst_ed = worst_ed.max(r / factor);

        let sorting = ok(ed_protocol(&g, n, EdCircuit::Sorting, 0), name)?;
        report.insert(
            name,
            format!(
                "DISJ {disj_rounds} rounds vs bound {bound} | ED {ed_rounds} rounds vs tau_mcf {tau1} (sorting circuit {}) | factor {factor:.0}",
                sorting.compiled.total_rounds()
            ),
        );
    }
    Ok(format!(
        "20 instances, worst DISJ ratio {worst_disj:.2}, worst ED ratio/factor {worst_ed:.2}"
    ))
}

type Job<'a> = Box<dyn FnOnce() -> Vec<(usize, &'static str, Outcome)> + Send + 'a>;

fn single(id: usize, name: &'static str, f: fn() -> Outcome) -> Job<'static> {
    Box::new(move || vec![(id, name, f())])
}

fn panic_text(e: Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut sandwich_detail = BTreeMap::new();
    let mut results: Vec<(usize, &str, Outcome, f64)> = std::thread::scope(|s| {
        let sw = &mut sandwich_detail;
        let jobs: Vec<(Vec<(usize, &'static str)>, Job)> = vec![
            (
                vec![(1, "clique identity")],
                single(1, "clique identity", clique_identity),
            ),
            (
                vec![(2, "bounded-demand routing")],
                single(2, "bounded-demand routing", bounded_demand_routing),
            ),
            (
                vec![(3, "sub-additivity")],
                single(3, "sub-additivity", sub_additivity),
            ),
            (
                vec![(4, "level vector")],
                single(4, "level vector", level_vectors),
            ),
            (
                vec![(5, "two-party extraction")],
                single(5, "two-party extraction", two_party_extraction),
            ),
            (
                vec![(6, "matching and tree builder")],
                single(6, "matching and tree builder", matching_and_builder),
            ),
            (
                vec![(7, "expander embedding"), (8, "lazy-walk bound")],
                Box::new(|| {
                    let mut embeddings = Vec::new();
                    let a = expander_embedding(&mut embeddings);
                    let b = lazy_walks(&embeddings);
                    vec![(7, "expander embedding", a), (8, "lazy-walk bound", b)]
                }),
            ),
            (
                vec![(9, "circuit compiler")],
                single(9, "circuit compiler", circuit_compiler),
            ),
            (
                vec![(10, "Steiner aggregation")],
                single(10, "Steiner aggregation", steiner_aggregation),
            ),
            (
                vec![(11, "reduction soundness")],
                single(11, "reduction soundness", reductions),
            ),
            (
                vec![(12, "BFS protocol family")],
                single(12, "BFS protocol family", bfs_family),
            ),
            (
                vec![(13, "end-to-end sandwich")],
                Box::new(move || vec![(13, "end-to-end sandwich", sandwich(sw))]),
            ),
        ];
        let handles: Vec<_> = jobs
            .into_iter()
            .map(|(ids, f)| {
                let h = s.spawn(move || {
                    let t = Instant::now();
                    let r = catch_unwind(AssertUnwindSafe(f)).map_err(panic_text);
                    (r, t.elapsed().as_secs_f64())
                });
                (ids, h)
            })
            .collect();
        let mut out = Vec::new();
        for (ids, h) in handles {
            match h.join() {
                Ok((Ok(rs), secs)) => {
                    out.extend(rs.into_iter().map(|(id, name, r)| (id, name, r, secs)))
                }
                Ok((Err(why), secs)) => out.extend(
                    ids.into_iter()
                        .map(|(id, name)| (id, name, Err(format!("panicked: {why}")), secs)),
                ),
                Err(_) => out.extend(
                    ids.into_iter()
                        .map(|(id, name)| (id, name, Err("thread died".to_string()), 0.0)),
                ),
            }
        }
        out
    });
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (id, name, r, secs) in &results {
        match r {
            Ok(detail) => println!("criterion {id:>2} PASS  {name} ({secs:.1}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name} ({secs:.1}s): {why}");
            }
        }
    }
    for (name, detail) in &sandwich_detail {
        println!("    {name:<10} {detail}");
    }
    println!(
        "acceptance: {} of {} passed in {:.1}s",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
