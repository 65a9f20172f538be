//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use achord::behaviors::{
    return_to_comms_step, CommsMode, MotionDirective, ReturnToCommsConfig, RobotCommsState, RobotPlace,
};
use achord::irm::{classify_checkpoint, CheckpointStrength, Irm, IrmNode, NodeKind};
use achord::mesh::MeshTopology;
use achord::propagation::{
    build_connectivity_map, fit_path_loss, shannon_capacity, GridSpec, PathLossModel, RadioSpec, SnrSample,
};
use achord::sim::{run, Scenario};
use achord::transport::{DataClass, Datagram, Endpoint, TopicConfig, TransportConfig};
use achord::NodeId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const CORRIDOR: &str = include_str!("../../../scenarios/corridor.json");

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn id(s: &str) -> NodeId {
    NodeId::from(s)
}

// 1 ------------------------------------------------------------------------

fn brute_widest(adj: &[Vec<Option<f64>>], src: usize, dst: usize) -> Option<f64> {
    fn dfs(adj: &[Vec<Option<f64>>], at: usize, dst: usize, seen: &mut Vec<bool>, bn: f64, best: &mut Option<f64>) {
        if at == dst {
            *best = Some(best.map_or(bn, |b| b.max(bn)));
            return;
        }
        for next in 0..adj.len() {
            if let Some(snr) = adj[at][next] {
                if !seen[next] {
                    seen[next] = true;
                    dfs(adj, next, dst, seen, bn.min(snr), best);
                    seen[next] = false;
                }
            }
        }
    }
    let mut seen = vec![false; adj.len()];
    seen[src] = true;
    let mut best = None;
    dfs(adj, src, dst, &mut seen, f64::INFINITY, &mut best);
    best
}

fn routing_oracle() -> Outcome {
    let start = Instant::now();
    let mut routed = 0;
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..=8);
        let names: Vec<NodeId> = (0..n).map(|i| NodeId::new(format!("n{i}"))).collect();
        let mut mesh = MeshTopology::new();
        for name in &names {
            mesh.add_node(name.clone());
        }
        let mut adj = vec![vec![None; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(0.45) {
                    // coarse values make ties common
                    let snr = if rng.gen_bool(0.3) {
                        rng.gen_range(1..=6) as f64 * 5.0
                    } else {
                        rng.gen_range(0.01..60.0)
                    };
                    adj[i][j] = Some(snr);
                    adj[j][i] = Some(snr);
                    mesh.set_link(&names[i], &names[j], snr, 0.0).map_err(|e| e.to_string())?;
                }
            }
        }
        let src = rng.gen_range(0..n);
        let mut dst = rng.gen_range(0..n);
        if dst == src {
            dst = (src + 1) % n;
        }
        let expect = brute_widest(&adj, src, dst);
        let got = mesh.widest_path_route(&names[src], &names[dst]).map_err(|e| e.to_string())?;
        match (expect, got) {
            (None, None) => {}
            (Some(b), Some(route)) => {
                ensure(route.bottleneck == b, || {
                    format!("seed {seed}: bottleneck {} but brute force {b}", route.bottleneck)
                })?;
                let along = mesh.bottleneck_snr(&route.path).map_err(|e| e.to_string())?;
                ensure(along == b, || format!("seed {seed}: returned path has bottleneck {along}"))?;
                routed += 1;
            }
            (e, g) => return Err(format!("seed {seed}: brute force {e:?}, route {g:?}")),
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("1000 graphs, {routed} routable, all exact, {elapsed:.2?}"))
}

// 2 ------------------------------------------------------------------------

fn fit_round_trip() -> Outcome {
    let truth = PathLossModel::new(1.0, 34.0, 3.83).map_err(|e| e.to_string())?;
    let clean: Vec<SnrSample> = (1..=100)
        .map(|i| {
            let d = i as f64 * 1.7;
            SnrSample {
                distance: d,
                observed_path_loss: 34.0 + 3.83 * 10.0 * d.log10(),
            }
        })
        .collect();
    let fit = fit_path_loss(&clean, 1.0).map_err(|e| e.to_string())?;
    let (e_eta, e_pl) = ((fit.eta - 3.83).abs(), (fit.pl_d0 - 34.0).abs());
    ensure(e_eta < 1e-9 && e_pl < 1e-9, || format!("noiseless fit off by eta {e_eta:e}, pl {e_pl:e}"))?;

    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noisy: Vec<SnrSample> = (0..200)
            .map(|_| {
                let d: f64 = rng.gen_range(1.0..150.0);
                SnrSample {
                    distance: d,
                    observed_path_loss: truth.path_loss(d).unwrap() + rng.gen_range(-0.5..=0.5),
                }
            })
            .collect();
        let fit = fit_path_loss(&noisy, 1.0).map_err(|e| e.to_string())?;
        worst = worst.max((fit.eta - 3.83).abs());
    }
    ensure(worst < 0.1, || format!("noisy eta error {worst}"))?;
    Ok(format!("noiseless error {e_eta:.1e}/{e_pl:.1e}; noisy eta error <= {worst:.4} over 20 seeds"))
}

// 3 ------------------------------------------------------------------------

fn shannon_spots() -> Outcome {
    let at0 = shannon_capacity(1e6, 0.0).map_err(|e| e.to_string())?;
    ensure(at0 == 1e6, || format!("0 dB gave {at0} bit/s"))?;
    let at20 = shannon_capacity(1e6, 20.0).map_err(|e| e.to_string())? / 1e6;
    ensure((at20 - 6.6582).abs() <= 1e-3, || format!("20 dB gave {at20} Mbit/s"))?;
    Ok(format!("0 dB -> {} Mbit/s, 20 dB -> {at20:.6} Mbit/s", at0 / 1e6))
}

// 4 ------------------------------------------------------------------------

fn payload_for(topic: u16, n: usize) -> Vec<u8> {
    // multi-chunk every so often
    let len = 40 + (n * 37) % 900 + if n.is_multiple_of(97) { 2500 } else { 0 };
    let mut p = Vec::with_capacity(len);
    p.extend_from_slice(&topic.to_be_bytes());
    p.extend_from_slice(&(n as u32).to_be_bytes());
    while p.len() < len {
        p.push((p.len() as u8).wrapping_mul(31) ^ n as u8);
    }
    p
}

fn reliability_under_loss() -> Outcome {
    let start = Instant::now();
    let topics = [
        TopicConfig {
            bucket_depth: 400_000.0,
            ..TopicConfig::new(1, DataClass::Key, 400_000.0, 1200)
        },
        TopicConfig {
            bucket_depth: 400_000.0,
            ..TopicConfig::new(2, DataClass::MissionCritical, 400_000.0, 1200)
        },
    ];
    let cfg = TransportConfig::default();
    let mut tx = Endpoint::new(&topics, cfg.clone(), 0.0).map_err(|e| e.to_string())?;
    let mut rx = Endpoint::new(&topics, cfg, 0.0).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let total = 10_000usize;
    let mut sent = BTreeMap::new();
    let mut received: BTreeMap<(u16, u32), usize> = BTreeMap::new();
    let mut key_order = Vec::new();
    let mut published = 0;
    let tick = 0.1;
    let mut t = 0.0;
    let (mut datagrams, mut lost) = (0usize, 0usize);
    while received.len() < total || tx.reliable_queued_bytes() > 0 {
        t += tick;
        ensure(t < 2000.0, || format!("stalled with {} of {total} delivered", received.len()))?;
        for _ in 0..100 {
            if published == total {
                break;
            }
            let topic = if published % 3 == 0 { 2 } else { 1 };
            let payload = payload_for(topic, published);
            let seq = tx.publish(topic, &payload, t).map_err(|e| e.to_string())?;
            sent.insert((topic, seq), payload);
            published += 1;
        }
        let mut acks = Vec::new();
        for dg in tx.service_transmit(t) {
            datagrams += 1;
            // every datagram crosses the wire encoded
            let bytes = dg.encode();
            if rng.gen_bool(0.3) {
                lost += 1;
                continue;
            }
            let got = rx.handle_bytes(&bytes, t).map_err(|e| e.to_string())?;
            for m in got.deliverable {
                *received.entry((m.topic_id, m.seq)).or_default() += 1;
                ensure(sent.get(&(m.topic_id, m.seq)) == Some(&m.payload), || {
                    format!("corrupt payload on {}/{}", m.topic_id, m.seq)
                })?;
                if m.topic_id == 1 {
                    key_order.push(m.seq);
                }
            }
            acks.extend(got.acks);
        }
        for ack in acks {
            let bytes = ack.encode();
            if rng.gen_bool(0.3) {
                continue;
            }
            tx.handle_ack(&Datagram::decode(&bytes).map_err(|e| e.to_string())?);
        }
    }
    let dupes = received.values().filter(|&&c| c != 1).count();
    ensure(received.len() == total && dupes == 0, || {
        format!("{} distinct delivered, {dupes} duplicated", received.len())
    })?;
    let first = key_order.first().copied().unwrap_or(0);
    let in_order = key_order.iter().enumerate().all(|(i, &s)| s == first + i as u32);
    ensure(in_order, || "key messages out of order or with gaps".into())?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{total} delivered once, {} key in order; {lost}/{datagrams} data datagrams lost; {elapsed:.2?}",
        key_order.len()
    ))
}

// 5 ------------------------------------------------------------------------

fn token_conformance() -> Outcome {
    let tick = 0.1;
    let window = (60.0 / tick) as usize;
    let mut checked = 0usize;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let classes = [DataClass::Key, DataClass::MissionCritical, DataClass::TimeSensitive];
        let topics: Vec<TopicConfig> = classes
            .iter()
            .enumerate()
            .map(|(i, &class)| {
                let rate = rng.gen_range(500.0..20_000.0);
                TopicConfig {
                    bucket_depth: rng.gen_range(1200.0..60_000.0),
                    ..TopicConfig::new(i as u16 + 1, class, rate, 1200)
                }
            })
            .collect();
        let mut ep = Endpoint::new(&topics, TransportConfig::default(), 0.0).map_err(|e| e.to_string())?;
        let steps = 3000;
        let mut emitted = vec![vec![0u64; steps]; topics.len()];
        let loss = rng.gen_range(0.0..0.5);
        for (k, row) in (0..steps).map(|k| (k, k)) {
            let t = (k + 1) as f64 * tick;
            for topic in &topics {
                // bursty schedule: mostly idle, sometimes a flood
                if rng.gen_bool(0.05) {
                    for _ in 0..rng.gen_range(1..40) {
                        let len = rng.gen_range(1..5000);
                        ep.publish(topic.topic_id, &vec![0u8; len], t).map_err(|e| e.to_string())?;
                    }
                }
            }
            for dg in ep.service_transmit(t) {
                let i = (dg.topic_id - 1) as usize;
                emitted[i][row] += dg.wire_len() as u64;
                if !rng.gen_bool(loss) {
                    ep.handle_ack(&dg.ack());
                }
            }
        }
        for (i, topic) in topics.iter().enumerate() {
            let limit = topic.bucket_depth + topic.token_rate * 60.0;
            let mut sum: u64 = emitted[i][..window].iter().sum();
            let mut worst = sum;
            for k in window..steps {
                sum = sum + emitted[i][k] - emitted[i][k - window];
                worst = worst.max(sum);
            }
            ensure(worst as f64 <= limit, || {
                format!("seed {seed} topic {}: {worst} bytes in 60 s, limit {limit}", topic.topic_id)
            })?;
            checked += 1;
        }
    }
    Ok(format!("{checked} topic schedules over 100 seeds within depth + rate*60"))
}

// 6 ------------------------------------------------------------------------

struct Fig6 {
    mean_mc_latency: f64,
    peak_buffer: u64,
    mc_delivered: usize,
}

/// Robot streams key data at 12 kB/s and mission-critical data at 1 kB/s to
/// the base. The link is perfect apart from a 120 s outage.
fn fig6_run(stratified: bool) -> Result<Fig6, String> {
    let key = TopicConfig {
        bucket_depth: 12_500.0,
        ..TopicConfig::new(1, DataClass::Key, 12_500.0, 1200)
    };
    let mc = TopicConfig {
        bucket_depth: 5_000.0,
        ..TopicConfig::new(2, DataClass::MissionCritical, 5_000.0, 1200)
    };
    let topics = if stratified { vec![key, mc] } else { vec![key] };
    let mc_topic = if stratified { 2 } else { 1 };
    let cfg = TransportConfig::default();
    let mut robot = Endpoint::new(&topics, cfg.clone(), 0.0).map_err(|e| e.to_string())?;
    let mut base = Endpoint::new(&topics, cfg, 0.0).map_err(|e| e.to_string())?;
    let tick = 0.1;
    let (outage_start, outage_end, end) = (60.0, 180.0, 600.0);
    let mut mc_seqs: BTreeMap<(u16, u32), f64> = BTreeMap::new();
    let mut latencies = Vec::new();
    let mut peak = 0;
    let steps = (end / tick) as usize;
    for k in 1..=steps {
        let t = k as f64 * tick;
        // 12 key messages and 1 mission-critical message of 1000 B per second
        if k % 10 == 0 {
            let seq = robot.publish(mc_topic, &[1u8; 1000], t).map_err(|e| e.to_string())?;
            mc_seqs.insert((mc_topic, seq), t);
        }
        for _ in 0..(if k % 5 == 0 { 2 } else { 1 }) {
            robot.publish(1, &[0u8; 1000], t).map_err(|e| e.to_string())?;
        }
        let up = !(outage_start..outage_end).contains(&t);
        let mut acks = Vec::new();
        for dg in robot.service_transmit(t) {
            if up {
                let got = base.handle_datagram(&dg, t).map_err(|e| e.to_string())?;
                for m in got.deliverable {
                    if let Some(sent) = mc_seqs.remove(&(m.topic_id, m.seq)) {
                        latencies.push(t - sent);
                    }
                }
                acks.extend(got.acks);
            }
        }
        for ack in acks {
            robot.handle_ack(&ack);
        }
        peak = peak.max(robot.reliable_queued_bytes());
    }
    if latencies.is_empty() {
        return Err("no mission-critical message delivered".into());
    }
    Ok(Fig6 {
        mean_mc_latency: latencies.iter().sum::<f64>() / latencies.len() as f64,
        peak_buffer: peak,
        mc_delivered: latencies.len(),
    })
}

fn stratification() -> Outcome {
    let merged = fig6_run(false)?;
    let split = fig6_run(true)?;
    ensure(split.mean_mc_latency < merged.mean_mc_latency, || {
        format!(
            "mission-critical latency {:.2} s stratified vs {:.2} s merged",
            split.mean_mc_latency, merged.mean_mc_latency
        )
    })?;
    ensure(split.peak_buffer < merged.peak_buffer, || {
        format!("peak buffer {} stratified vs {} merged", split.peak_buffer, merged.peak_buffer)
    })?;
    Ok(format!(
        "mean MC latency {:.2} s vs {:.2} s ({} vs {} delivered); peak buffer {} B vs {} B",
        split.mean_mc_latency,
        merged.mean_mc_latency,
        split.mc_delivered,
        merged.mc_delivered,
        split.peak_buffer,
        merged.peak_buffer
    ))
}

// 7 ------------------------------------------------------------------------

/// base - n1 .. n8 every 10 m, with strong checkpoints at n2 and n5.
fn rtc_roadmap() -> Irm {
    let mut irm = Irm::new();
    irm.upsert_node(IrmNode::new("base", NodeKind::Breadcrumb, [0.0; 3])).unwrap();
    let mut prev = id("base");
    for i in 1..=8 {
        let name = id(&format!("n{i}"));
        irm.upsert_node(IrmNode::new(name.clone(), NodeKind::Breadcrumb, [10.0 * i as f64, 0.0, 0.0]))
            .unwrap();
        irm.add_edge(&prev, &name, 10.0).unwrap();
        prev = name;
    }
    for (at, snr) in [("n2", 32.0), ("n5", 21.0)] {
        let cp = id(&format!("cp{at}"));
        let pos = irm.node(&id(at)).unwrap().position;
        irm.upsert_node(IrmNode {
            snr,
            ..IrmNode::new(cp.clone(), NodeKind::CommsCheckpoint, pos)
        })
        .unwrap();
        irm.add_edge(&id(at), &cp, 0.0).unwrap();
    }
    irm
}

fn rtc_thresholds() -> Outcome {
    let irm = rtc_roadmap();
    let cfg = ReturnToCommsConfig::default();
    ensure(
        cfg.upper_bytes == 300_000 && cfg.lower_bytes == 200_000 && cfg.wait_timeout == 60.0,
        || format!("defaults {cfg:?}"),
    )?;
    let base = id("base");
    let tick = 0.1;
    let far = id("n8");
    let step = |s: &RobotCommsState, bytes: u64, node: &NodeId, at: bool, t: f64| {
        return_to_comms_step(s, bytes, &irm, RobotPlace { node, at_node: at }, &base, &cfg, t)
            .map_err(|e| e.to_string())
    };

    // ramp up by 7 kB per tick
    let mut s = RobotCommsState::default();
    let mut k = 0;
    let trigger = loop {
        k += 1;
        let bytes = 7_000 * k;
        let (next, dir) = step(&s, bytes, &far, true, k as f64 * tick)?;
        let crossed = bytes > 300_000;
        ensure((next.mode == CommsMode::ReturningToComms) == crossed, || {
            format!("tick {k}: buffer {bytes} gave {:?}", next.mode)
        })?;
        s = next;
        if crossed {
            ensure(dir == MotionDirective::GoTo(id("cpn5")), || format!("directive {dir:?}"))?;
            break k;
        }
    };

    // decay: stays returning until strictly below the lower threshold
    let mut bytes = 7_000 * trigger;
    let restored = loop {
        k += 1;
        bytes -= 9_000;
        let (next, dir) = step(&s, bytes, &id("n7"), false, k as f64 * tick)?;
        if bytes < 200_000 {
            ensure(next.mode == CommsMode::Exploring && dir == MotionDirective::Explore, || {
                format!("buffer {bytes} left mode {:?}", next.mode)
            })?;
            break bytes;
        }
        ensure(next.mode == CommsMode::ReturningToComms, || {
            format!("buffer {bytes} dropped out early to {:?}", next.mode)
        })?;
        s = next;
    };

    // held 250 kB at the checkpoint
    let mut s = RobotCommsState::default();
    let mut t = 1000.0;
    s = step(&s, 350_000, &far, true, t)?.0;
    let cp = id("cpn5");
    t += tick;
    let (next, _) = step(&s, 250_000, &cp, true, t)?;
    ensure(next.mode == CommsMode::WaitingAtCheckpoint, || format!("arrival gave {:?}", next.mode))?;
    let since = t;
    s = next;
    let escalated_at = loop {
        t += tick;
        ensure(t - since < 120.0, || "never escalated".into())?;
        let (next, dir) = step(&s, 250_000, &cp, true, t)?;
        s = next;
        if s.mode == CommsMode::EscalatingCloser {
            ensure(dir == MotionDirective::GoTo(id("cpn2")), || format!("escalated to {dir:?}"))?;
            break t;
        }
    };
    let waited = escalated_at - since;
    ensure((waited - 60.0).abs() <= tick + 1e-9, || format!("escalated after {waited} s"))?;
    Ok(format!(
        "trigger at {} B on tick {trigger}; exploring again at {restored} B; escalation after {waited:.1} s",
        7_000 * trigger
    ))
}

// 8 ------------------------------------------------------------------------

fn classification() -> Outcome {
    use CheckpointStrength::*;
    let cases = [
        (0.0, None),
        (f64::MIN_POSITIVE, Weak),
        (1e-9, Weak),
        (19.99, Weak),
        (20.0, Strong),
        (100.0, Strong),
    ];
    for (snr, want) in cases {
        let got = classify_checkpoint(snr).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("{snr} dB classified {got:?}, want {want:?}"))?;
    }
    Ok("0, eps, 19.99, 20, 100 dB -> None, Weak, Weak, Strong, Strong".into())
}

// 9 ------------------------------------------------------------------------

fn connectivity_map() -> Outcome {
    let model = PathLossModel::default();
    let radio = |name: &str, x: f64, y: f64, tx: f64| RadioSpec {
        id: id(name),
        position: [x, y, 0.0],
        tx_power: tx,
        noise_level: -90.0,
        bandwidth: 1e6,
    };
    let radios = vec![
        radio("base", 0.0, 0.0, 20.0),
        radio("r1", 35.0, 10.0, 17.0),
        radio("r2", 60.0, 55.0, 20.0),
    ];
    let bottlenecks = BTreeMap::from([(id("base"), f64::INFINITY), (id("r1"), 31.5), (id("r2"), 22.25)]);
    let grid = GridSpec {
        origin: [-20.0, -20.0],
        resolution: 5.0,
        width: 20,
        height: 20,
        z: 0.0,
    };
    let map = build_connectivity_map(&radios, &bottlenecks, &grid, -90.0, &model).map_err(|e| e.to_string())?;
    ensure(map.cells.len() == 400, || format!("{} cells", map.cells.len()))?;
    let mut strong = 0;
    for row in 0..20 {
        for col in 0..20 {
            let x = -20.0 + 5.0 * (col as f64 + 0.5);
            let y = -20.0 + 5.0 * (row as f64 + 0.5);
            let mut best: f64 = 0.0;
            for r in &radios {
                let d = ((x - r.position[0]).powi(2) + (y - r.position[1]).powi(2)).sqrt().max(1.0);
                let snr = r.tx_power - (34.0 + 3.83 * 10.0 * (d / 1.0).log10()) - -90.0;
                best = best.max(snr.min(bottlenecks[&r.id]));
            }
            let got = map.get(col, row);
            ensure(got == best, || format!("cell ({col}, {row}): map {got}, oracle {best}"))?;
            if best >= 20.0 {
                strong += 1;
            }
        }
    }
    Ok(format!("400 cells exact ({strong} strong)"))
}

// 10 -----------------------------------------------------------------------

fn determinism() -> Outcome {
    let sc = Scenario::from_json(CORRIDOR).map_err(|e| e.to_string())?;
    let a = run(&sc).map_err(|e| e.to_string())?;
    let b = run(&sc).map_err(|e| e.to_string())?;
    ensure(a.metrics_json() == b.metrics_json(), || "metrics differ".into())?;
    let (la, lb) = (a.event_log(), b.event_log());
    ensure(la == lb, || "event logs differ".into())?;
    Ok(format!("{} event log bytes identical, seed {}", la.len(), sc.seed))
}

// 11 -----------------------------------------------------------------------

fn smoke() -> Outcome {
    let sc = Scenario::from_json(CORRIDOR).map_err(|e| e.to_string())?;
    ensure(sc.robots.len() == 3 && sc.robots.iter().all(|r| r.slots == 2), || {
        "reference scenario must field 3 robots with 2 slots".into()
    })?;
    let depth = sc
        .irm_seed_graph
        .distances_from(&sc.base_node)
        .map_err(|e| e.to_string())?
        .into_values()
        .fold(0.0, f64::max);
    let start = Instant::now();
    let out = run(&sc).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    let m = &out.report;
    ensure(m.deployed_radios >= 1, || "no radio deployed".into())?;
    // SNR reaches 0 where tx - noise = PL(d), both ends alike
    let r = &sc.base_radio;
    let single_hop = sc.model.d0 * 10f64.powf((r.tx_power - r.noise_level - sc.model.pl_d0) / (10.0 * sc.model.eta));
    ensure(m.effective_comm_range > single_hop, || {
        format!("range {} m does not beat single hop {single_hop:.1} m", m.effective_comm_range)
    })?;
    Ok(format!(
        "corridor {depth} m deep: {} radios deployed, range {:.1} m > {single_hop:.1} m, {elapsed:.2?}",
        m.deployed_radios, m.effective_comm_range
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("routing oracle", routing_oracle),
        ("path-loss fit round trip", fit_round_trip),
        ("Shannon spot values", shannon_spots),
        ("transport reliability under 30% loss", reliability_under_loss),
        ("token bucket conformance", token_conformance),
        ("stratification after outage", stratification),
        ("return-to-comms thresholds", rtc_thresholds),
        ("checkpoint classification", classification),
        ("connectivity map oracle", connectivity_map),
        ("determinism", determinism),
        ("end-to-end smoke scenario", smoke),
    ];
    let mut failed = BTreeSet::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                println!("FAIL {:>2} {name}: {why}", i + 1);
                failed.insert(i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed.len(), criteria.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
