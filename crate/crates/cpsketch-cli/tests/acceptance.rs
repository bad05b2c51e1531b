//! End-to-end acceptance checks, one test per shipped guarantee. Each test
//! prints a `criterion N (...): PASS` line; run with
//! `cargo test --test acceptance -- --nocapture` to see them.

use std::collections::{BTreeMap, BTreeSet};
use std::process::Command;
use std::time::Instant;

use cpsketch::gossip::{self, Graph, SimConfig};
use cpsketch::poly::{self, Poly};
use cpsketch::relay::{party_decode, PartyRecovery, PartyState, RelayState};
use cpsketch::sketch::{combine_union, recover_difference};
use cpsketch::{choose_field, Field, Mode, Sketch, SketchError, SketchParams};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn params_for(m: u64, owners: u32, d: u32, c: u32) -> SketchParams {
    SketchParams::new(choose_field(m, owners, d, c).unwrap())
}

/// Draws `count` fresh keys below `m`, disjoint from everything in `taken`.
fn sample_keys(rng: &mut ChaCha8Rng, m: u64, count: usize, taken: &mut BTreeSet<u64>) -> BTreeSet<u64> {
    let mut out = BTreeSet::new();
    while out.len() < count {
        let k = rng.gen_range(0..m);
        if taken.insert(k) {
            out.insert(k);
        }
    }
    out
}

/// N party sets sharing a common core plus `total_diff` extra values, each
/// held by a random nonempty proper subset of the parties. Returns the sets,
/// their union, and their intersection (= the core).
fn random_party_sets(
    rng: &mut ChaCha8Rng,
    m: u64,
    n: usize,
    core_max: usize,
    total_diff: usize,
) -> (Vec<BTreeSet<u64>>, BTreeSet<u64>, BTreeSet<u64>) {
    assert!(n >= 2);
    let mut taken = BTreeSet::new();
    let core_size = rng.gen_range(0..=core_max);
    let core = sample_keys(rng, m, core_size, &mut taken);
    let extras = sample_keys(rng, m, total_diff, &mut taken);
    let mut sets = vec![core.clone(); n];
    for &value in &extras {
        let full = (1u32 << n) - 1;
        let mask = rng.gen_range(1..full);
        for (i, set) in sets.iter_mut().enumerate() {
            if mask & (1 << i) != 0 {
                set.insert(value);
            }
        }
    }
    let union: BTreeSet<u64> = core.union(&extras).copied().collect();
    (sets, union, core)
}

#[test]
fn criterion_1_two_party_exact_recovery() {
    let start = Instant::now();
    let m = 1_000_000u64;
    let mut rng = rng(0xC1);
    let mut trials_run = 0u32;
    for &d in &[1u32, 8, 64] {
        let trials = if d == 1 { 334 } else { 333 };
        let params = params_for(m, 1, d, 2);
        for trial in 0..trials {
            let total = rng.gen_range(0..=d) as usize;
            // Mostly mid-sized sets, periodically the full 10^4.
            let shared_size =
                if trial % 50 == 0 { 10_000 - d as usize } else { rng.gen_range(0..=4000) };
            let mut taken = BTreeSet::new();
            let shared = sample_keys(&mut rng, m, shared_size, &mut taken);
            let split = rng.gen_range(0..=total);
            let a_extra = sample_keys(&mut rng, m, split, &mut taken);
            let b_extra = sample_keys(&mut rng, m, total - split, &mut taken);
            let a: BTreeSet<u64> = shared.union(&a_extra).copied().collect();
            let b: BTreeSet<u64> = shared.union(&b_extra).copied().collect();
            let sa = Sketch::of_set(a.iter().copied(), &params).unwrap();
            let sb = Sketch::of_set(b.iter().copied(), &params).unwrap();
            let (a_only, b_only) = recover_difference(&sa, &sb, &mut rng).unwrap();
            assert_eq!(a_only, a_extra, "d={d} trial {trial}: A-side difference");
            assert_eq!(b_only, b_extra, "d={d} trial {trial}: B-side difference");
            trials_run += 1;
        }
    }
    let elapsed = start.elapsed();
    assert_eq!(trials_run, 1000);
    assert!(elapsed.as_secs() < 60, "suite took {elapsed:?}, budget is 60s");
    println!("criterion 1 (two-party exact recovery): PASS 1000/1000 trials in {elapsed:.2?}");
}

#[test]
fn criterion_2_relay_plain_unions_and_message_audit() {
    let d = 32u32;
    let c = 2u32;
    let m = 1000u64;
    let params = params_for(m, 1, d, c);
    let expected_len = 42 + 8 * (d + c + 1) as usize;
    assert_eq!(params.message_len(), expected_len);
    let mut rng = rng(0xC2);
    let mut trials = 0u32;
    for &n in &[2usize, 5, 16] {
        for _ in 0..100 {
            let total = rng.gen_range(0..=d as usize);
            let (sets, union, _) = random_party_sets(&mut rng, m, n, 300, total);
            let parties: Vec<PartyState> = sets
                .iter()
                .enumerate()
                .map(|(i, s)| PartyState::new(i as u32 + 1, s.iter().copied(), &params, Mode::Plain).unwrap())
                .collect();
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut relay = RelayState::new(params, Mode::Plain, rng.gen());
            let mut messages = 0usize;
            for &i in &order {
                let message = parties[i].encode();
                assert_eq!(message.len(), expected_len, "party message size");
                relay.ingest(i as u32 + 1, &message).unwrap();
                messages += 1;
            }
            let broadcasts = relay.finalize().unwrap();
            assert_eq!(messages, n);
            assert_eq!(broadcasts.len(), 1, "plain mode broadcasts a single sketch");
            assert_eq!(broadcasts[0].len(), expected_len, "broadcast size");
            for party in &parties {
                let recovered = party_decode(party, &broadcasts, Mode::Plain, &mut rng).unwrap();
                let PartyRecovery::Plain(missing) = recovered else {
                    panic!("plain decode must yield a plain recovery");
                };
                let full: BTreeSet<u64> = party.keys().union(&missing).copied().collect();
                assert_eq!(full, union, "party {} reconstructed union", party.index());
            }
            trials += 1;
        }
    }
    assert_eq!(trials, 300);
    println!(
        "criterion 2 (relay plain unions, message audit): PASS 300/300 trials, \
         every message exactly {expected_len} bytes"
    );
}

#[test]
fn criterion_3_relay_owner_minimal_attribution() {
    let d = 16u32;
    let c = 2u32;
    let m = 200u64;
    let mut rng = rng(0xC3);
    let mut trials = 0u32;
    for &n in &[2usize, 5, 16] {
        let params = params_for(m, n as u32, d, c);
        for _ in 0..100 {
            let total = rng.gen_range(0..=d as usize);
            let (sets, union, intersection) = random_party_sets(&mut rng, m, n, 40, total);
            let parties: Vec<PartyState> = sets
                .iter()
                .enumerate()
                .map(|(i, s)| PartyState::new(i as u32 + 1, s.iter().copied(), &params, Mode::Owner).unwrap())
                .collect();
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut relay = RelayState::new(params, Mode::Owner, rng.gen());
            for &i in &order {
                relay.ingest(i as u32 + 1, &parties[i].encode()).unwrap();
            }
            let broadcasts = relay.finalize().unwrap();
            assert_eq!(broadcasts.len(), 2, "owner mode broadcasts two sketches");

            // Oracle: outside the intersection, the owner is the earliest
            // arrival holding the value.
            let mut expected: BTreeMap<u64, u32> = BTreeMap::new();
            for &value in union.difference(&intersection) {
                let owner = order
                    .iter()
                    .find(|&&i| sets[i].contains(&value))
                    .map(|&i| i as u32 + 1)
                    .unwrap();
                expected.insert(value, owner);
            }
            assert_eq!(relay.ledger(), &expected, "ledger attribution");

            for party in &parties {
                let recovered = party_decode(party, &broadcasts, Mode::Owner, &mut rng).unwrap();
                let PartyRecovery::Owner(pairs) = recovered else {
                    panic!("owner decode must yield owner pairs");
                };
                let own = party.keys();
                let want: Vec<(u64, u32)> = union
                    .iter()
                    .filter(|v| !own.contains(v))
                    .map(|&v| (v, expected[&v]))
                    .collect();
                let got: Vec<(u64, u32)> = pairs.iter().map(|e| (e.value, e.owner)).collect();
                assert_eq!(got, want, "party {} recovery", party.index());
                for e in &pairs {
                    assert!(
                        sets[e.owner as usize - 1].contains(&e.value),
                        "attributed owner must hold the value"
                    );
                }
            }
            trials += 1;
        }
    }
    assert_eq!(trials, 300);
    println!(
        "criterion 3 (relay owner attribution minimal in ingest order): PASS 300/300 trials, \
         2 broadcasts each"
    );
}

#[test]
fn criterion_4_oversized_difference_never_lies() {
    let d = 8u32;
    let m = 100_000u64;
    let params = params_for(m, 1, d, 2);
    let mut rng = rng(0xC4);
    let mut detected = 0u32;
    let mut lucky = 0u32;
    for _ in 0..10_000 {
        let total = rng.gen_range(d + 1..=2 * d) as usize;
        let mut taken = BTreeSet::new();
        let shared_size = rng.gen_range(0..=50);
        let shared = sample_keys(&mut rng, m, shared_size, &mut taken);
        let split = rng.gen_range(0..=total);
        let a_extra = sample_keys(&mut rng, m, split, &mut taken);
        let b_extra = sample_keys(&mut rng, m, total - split, &mut taken);
        let a: BTreeSet<u64> = shared.union(&a_extra).copied().collect();
        let b: BTreeSet<u64> = shared.union(&b_extra).copied().collect();
        let sa = Sketch::of_set(a.iter().copied(), &params).unwrap();
        let sb = Sketch::of_set(b.iter().copied(), &params).unwrap();
        match recover_difference(&sa, &sb, &mut rng) {
            Ok((a_only, b_only)) => {
                // Accidental success is allowed only when exactly right.
                assert_eq!(a_only, a_extra, "lucky decode must be exact");
                assert_eq!(b_only, b_extra, "lucky decode must be exact");
                lucky += 1;
            }
            Err(SketchError::DifferenceBoundExceeded) | Err(SketchError::VerificationFailed) => {
                detected += 1;
            }
            Err(other) => panic!("unexpected error kind: {other}"),
        }
    }
    assert_eq!(detected + lucky, 10_000);
    println!(
        "criterion 4 (oversized differences detected): PASS 10000 trials, \
         {detected} detected, {lucky} exact-by-luck, 0 silent wrong answers"
    );
}

/// Frozen on first run; the simulator is deterministic so these are stable.
const K16_MEDIAN_ROUNDS: u32 = 4;
const C16_MEDIAN_ROUNDS: u32 = 10;

#[test]
fn criterion_5_gossip_completion_within_conductance_bound() {
    let n: u32 = 16;
    let log2n = 4u32;
    let core: BTreeSet<u64> = (0..6).collect();
    let mut party_sets = Vec::new();
    for i in 0..n {
        let mut s = core.clone();
        s.insert(10 + (i as u64 % 4));
        party_sets.push(s);
    }
    let params = params_for(100, 1, 4, 2);
    let placement: BTreeMap<u32, u32> = (0..n).map(|v| (v, v + 1)).collect();

    let run = |graph: Graph, label: &str| -> (u32, u32) {
        let (num, den) = gossip::conductance(&graph).unwrap();
        // max_rounds = 20 * (1/phi) * log2(N), rounded up.
        let max_rounds = ((20 * den * u64::from(log2n)) as f64 / num as f64).ceil() as u32;
        let mut rounds = Vec::new();
        for seed in 0..200 {
            let cfg = SimConfig {
                graph: graph.clone(),
                params,
                mode: Mode::Plain,
                placement: placement.clone(),
                party_sets: party_sets.clone(),
                seed,
                max_rounds,
            };
            let log = gossip::simulate(&cfg).unwrap();
            let round = log
                .completion_round
                .unwrap_or_else(|| panic!("{label} seed {seed} incomplete after {max_rounds}"));
            assert!(log.max_payload_sketches <= 2, "{label}: payload audit");
            rounds.push(round);
        }
        rounds.sort_unstable();
        (rounds[rounds.len() / 2], max_rounds)
    };

    let (k16_median, k16_budget) = run(Graph::complete(n), "K16");
    let (c16_median, c16_budget) = run(Graph::cycle(n), "C16");
    assert_eq!(
        (k16_median, c16_median),
        (K16_MEDIAN_ROUNDS, C16_MEDIAN_ROUNDS),
        "frozen median completion rounds moved"
    );
    println!(
        "criterion 5 (gossip completion): PASS 400/400 runs complete, \
         K16 median {k16_median} of budget {k16_budget}, \
         C16 median {c16_median} of budget {c16_budget}, <=2 sketches per contact"
    );
}

#[test]
fn criterion_6_gossip_owner_decodes_match_brute_force() {
    let n = 6usize;
    let m = 60u64;
    let params = params_for(m, n as u32, 8, 2);
    let mut rng = rng(0xC6);
    for trial in 0..100u64 {
        let graph = match trial % 3 {
            0 => Graph::complete(n as u32),
            1 => Graph::cycle(n as u32),
            _ => Graph::star(n as u32),
        };
        let total = rng.gen_range(0..=8);
        let (sets, union, _) = random_party_sets(&mut rng, m, n, 20, total);
        let mut labels: Vec<u32> = (1..=n as u32).collect();
        labels.shuffle(&mut rng);
        let placement: BTreeMap<u32, u32> =
            (0..n as u32).map(|v| (v, labels[v as usize])).collect();
        let cfg = SimConfig {
            graph,
            params,
            mode: Mode::Owner,
            placement,
            party_sets: sets.clone(),
            seed: trial,
            max_rounds: 64,
        };
        let log = gossip::simulate(&cfg).unwrap();
        assert!(log.completion_round.is_some(), "trial {trial} incomplete");
        assert_eq!(log.recoveries.len(), n);
        for report in &log.recoveries {
            let own = &sets[report.party as usize - 1];
            let PartyRecovery::Owner(pairs) = &report.recovered else {
                panic!("owner mode must yield owner pairs");
            };
            let values: BTreeSet<u64> = pairs.iter().map(|e| e.value).collect();
            let want: BTreeSet<u64> = union.difference(own).copied().collect();
            assert_eq!(values, want, "trial {trial} party {} values", report.party);
            for e in pairs {
                assert!(
                    sets[e.owner as usize - 1].contains(&e.value),
                    "trial {trial}: owner {} does not hold {}",
                    e.owner,
                    e.value
                );
            }
        }
    }
    println!(
        "criterion 6 (gossip owner decode): PASS 100/100 runs, values match brute force, \
         owners are true holders"
    );
}

/// Straightforward subset scan, independent of the library's incremental
/// Gray-code enumeration.
fn reference_conductance(n: u32, edges: &[(u32, u32)]) -> (u64, u64) {
    let degree = |v: u32| edges.iter().filter(|&&(a, b)| a == v || b == v).count() as u64;
    let vol_total: u64 = (0..n).map(degree).sum();
    let mut best: Option<(u64, u64)> = None;
    for mask in 1u64..(1 << n) - 1 {
        let inside = |v: u32| mask & (1 << v) != 0;
        let vol: u64 = (0..n).filter(|&v| inside(v)).map(degree).sum();
        if vol == 0 || 2 * vol > vol_total {
            continue;
        }
        let cut = edges.iter().filter(|&&(a, b)| inside(a) != inside(b)).count() as u64;
        let better = match best {
            None => true,
            Some((bc, bv)) => cut * bv < bc * vol,
        };
        if better {
            best = Some((cut, vol));
        }
    }
    let (c, v) = best.unwrap();
    let mut g = (c, v);
    while g.1 != 0 {
        g = (g.1, g.0 % g.1);
    }
    let g = g.0.max(1);
    (c / g, v / g)
}

#[test]
fn criterion_7_conductance_fixtures_and_reference_agreement() {
    assert_eq!(gossip::conductance(&Graph::complete(4)).unwrap(), (2, 3));
    assert_eq!(gossip::conductance(&Graph::cycle(8)).unwrap(), (1, 4));
    assert_eq!(gossip::conductance(&Graph::complete(2)).unwrap(), (1, 1));

    let mut rng = rng(0xC7);
    for trial in 0..50 {
        let n = rng.gen_range(2..=12u32);
        // Random spanning tree, then extra edges.
        let mut vertices: Vec<u32> = (0..n).collect();
        vertices.shuffle(&mut rng);
        let mut edges = Vec::new();
        for i in 1..n as usize {
            let j = rng.gen_range(0..i);
            let (a, b) = (vertices[i].min(vertices[j]), vertices[i].max(vertices[j]));
            edges.push((a, b));
        }
        for _ in 0..rng.gen_range(0..=n) {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            let e = (a.min(b), a.max(b));
            if a != b && !edges.contains(&e) {
                edges.push(e);
            }
        }
        let graph = Graph::new(n, &edges).unwrap();
        assert_eq!(
            gossip::conductance(&graph).unwrap(),
            reference_conductance(n, &edges),
            "trial {trial}, n={n}"
        );
    }
    println!(
        "criterion 7 (conductance oracle): PASS fixtures K4=2/3 C8=1/4 K2=1/1 \
         and 50/50 reference agreements"
    );
}

#[test]
fn criterion_8_simulations_are_byte_deterministic() {
    let bin = env!("CARGO_BIN_EXE_cpsketch");
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name);
    let write = |name: &str, text: &str| std::fs::write(path(name), text).unwrap();

    write("p1.keys", "3\n17\n29\n41\n");
    write("p2.keys", "3\n17\n29\n55\n");
    write("p3.keys", "3\n17\n29\n60\n71\n");
    write("ring.graph", "8 8\n0 1\n1 2\n2 3\n3 4\n4 5\n5 6\n6 7\n7 0\n");
    write("ring.placement", "0 1\n3 2\n5 3\n");

    let run = |args: &[&str]| {
        let output = Command::new(bin).args(args).output().unwrap();
        assert!(
            output.status.success(),
            "command failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
    };
    let gossip_args = |out: &str, csv: &str| -> Vec<String> {
        [
            "gossip-sim",
            "--graph", path("ring.graph").to_str().unwrap(),
            "--party", path("p1.keys").to_str().unwrap(),
            "--party", path("p2.keys").to_str().unwrap(),
            "--party", path("p3.keys").to_str().unwrap(),
            "--placement", path("ring.placement").to_str().unwrap(),
            "--m", "100", "--d", "8", "--owners", "--seed", "11",
            "--out", path(out).to_str().unwrap(),
            "--rounds-csv", path(csv).to_str().unwrap(),
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    };
    let relay_args = |out: &str| -> Vec<String> {
        [
            "relay-sim",
            "--party", path("p1.keys").to_str().unwrap(),
            "--party", path("p2.keys").to_str().unwrap(),
            "--party", path("p3.keys").to_str().unwrap(),
            "--m", "100", "--d", "8", "--owners", "--seed", "5",
            "--out", path(out).to_str().unwrap(),
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    };

    let args1 = gossip_args("g1.json", "g1.csv");
    let args2 = gossip_args("g2.json", "g2.csv");
    run(&args1.iter().map(String::as_str).collect::<Vec<_>>());
    run(&args2.iter().map(String::as_str).collect::<Vec<_>>());
    let read = |name: &str| std::fs::read(path(name)).unwrap();
    assert_eq!(read("g1.json"), read("g2.json"), "gossip JSON must be byte-identical");
    assert_eq!(read("g1.csv"), read("g2.csv"), "gossip CSV must be byte-identical");
    assert!(!read("g1.csv").is_empty());

    let r1 = relay_args("r1.json");
    let r2 = relay_args("r2.json");
    run(&r1.iter().map(String::as_str).collect::<Vec<_>>());
    run(&r2.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(read("r1.json"), read("r2.json"), "relay JSON must be byte-identical");

    println!(
        "criterion 8 (determinism): PASS repeated gossip-sim and relay-sim runs \
         produced byte-identical JSON and CSV"
    );
}

#[test]
fn criterion_9_algebraic_suites() {
    // Field axioms on the largest supported modulus.
    let f = Field::new((1u64 << 61) - 1).unwrap();
    let mut rng = rng(0xC9);
    for _ in 0..100_000 {
        let a = rng.gen_range(0..f.modulus());
        let b = rng.gen_range(0..f.modulus());
        let c = rng.gen_range(0..f.modulus());
        assert_eq!(f.add(a, b), f.add(b, a));
        assert_eq!(f.add(f.add(a, b), c), f.add(a, f.add(b, c)));
        assert_eq!(f.mul(a, b), f.mul(b, a));
        assert_eq!(f.mul(f.mul(a, b), c), f.mul(a, f.mul(b, c)));
        assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
        assert_eq!(f.sub(a, a), 0);
        if a != 0 {
            assert_eq!(f.mul(a, f.inv(a).unwrap()), 1);
        }
    }

    // Interpolation/evaluation round trips.
    let f = Field::new(1_000_003).unwrap();
    for _ in 0..10_000 {
        let k = rng.gen_range(1..=8usize);
        let mut xs = BTreeSet::new();
        while xs.len() < k {
            xs.insert(rng.gen_range(0..f.modulus()));
        }
        let points: Vec<(u64, u64)> =
            xs.iter().map(|&x| (x, rng.gen_range(0..f.modulus()))).collect();
        let p = poly::interpolate(&points, &f).unwrap();
        assert!(p.degree().is_none_or(|deg| deg < k));
        for &(x, y) in &points {
            assert_eq!(p.eval(x, &f), y);
        }
    }

    // Roots of a built-from-roots polynomial come back exactly; exercise
    // both the exhaustive-scan and the random-splitting field sizes.
    for (q, trials) in [(2053u64, 8000u32), (1_000_003, 2000)] {
        let f = Field::new(q).unwrap();
        for _ in 0..trials {
            let k = rng.gen_range(1..=8usize);
            let mut roots_in = BTreeSet::new();
            while roots_in.len() < k {
                roots_in.insert(rng.gen_range(0..f.modulus()));
            }
            let roots_in: Vec<u64> = roots_in.into_iter().collect();
            let p = Poly::from_roots(&roots_in, &f);
            let found = poly::roots(&p, &f, &mut rng).unwrap();
            assert_eq!(found, roots_in);
        }
    }

    // Combining sketches equals sketching the union.
    let params = params_for(2000, 1, 8, 2);
    for _ in 0..1000 {
        let mut taken = BTreeSet::new();
        let shared_size = rng.gen_range(0..=100);
        let shared = sample_keys(&mut rng, 2000, shared_size, &mut taken);
        let split = rng.gen_range(0..=8usize);
        let b_count = rng.gen_range(0..=(8 - split));
        let a_extra = sample_keys(&mut rng, 2000, split, &mut taken);
        let b_extra = sample_keys(&mut rng, 2000, b_count, &mut taken);
        let a: BTreeSet<u64> = shared.union(&a_extra).copied().collect();
        let b: BTreeSet<u64> = shared.union(&b_extra).copied().collect();
        let union: BTreeSet<u64> = a.union(&b).copied().collect();
        let sa = Sketch::of_set(a.iter().copied(), &params).unwrap();
        let sb = Sketch::of_set(b.iter().copied(), &params).unwrap();
        let combined = combine_union(&sa, &sb, &mut rng).unwrap();
        let direct = Sketch::of_set(union.iter().copied(), &params).unwrap();
        assert_eq!(combined, direct);
    }

    println!(
        "criterion 9 (algebraic suites): PASS field axioms 10^5, interpolation 10^4, \
         roots 10^4, combine-vs-direct 10^3"
    );
}
