//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tactile_nav::behavior::EscalationRecord;
use tactile_nav::costmap::{
    build_semantic_obstacle_layer, build_static_layer, combine, inflate_layer, inflate_sources, proxemic_field, Cell,
    CostLayer, GridSpec, InflationParams, OccupancyGrid, ProxemicParams, SocialCostTable, ADULT, INSCRIBED, LETHAL,
};
use tactile_nav::math::{normalize_angle, Vec2};
use tactile_nav::planner::{plan_global, PlanError, PlannerConfig};
use tactile_nav::proximity::{filter, FilterConfig, FilterPhase, FilterState};
use tactile_nav::scenario::protocol::ClientMessage;
use tactile_nav::scenario::{bundled_names, bundled_scenario, fsm_trace, replay_log, Outcome, RunReport, Scenario, Session};
use tactile_nav::sim::{HumanEstimate, LaserScan, TactileFrame, VelocityCommand};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn bundled(name: &str) -> Scenario {
    bundled_scenario(name).expect("bundled").expect("valid")
}

fn golden(name: &str) -> Vec<String> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.fsm"));
    std::fs::read_to_string(path).expect("golden file").lines().map(str::to_string).collect()
}

// ---- oracles ----

fn oracle_inflation_cost(d: f64, source: u8, p: &InflationParams) -> u8 {
    if d == 0.0 {
        source
    } else if d <= p.inscribed_radius {
        source - 1
    } else if d <= p.inflation_radius {
        ((source - 1) as f64 * (-p.decay * (d - p.inscribed_radius)).exp()).round() as u8
    } else {
        0
    }
}

// Every output cell against every source cell.
fn oracle_inflate(layer: &CostLayer, p: &InflationParams) -> Vec<u8> {
    let spec = layer.spec();
    let (w, h) = (spec.width as i32, spec.height as i32);
    let mut out = vec![0u8; spec.len()];
    for ty in 0..h {
        for tx in 0..w {
            let mut best = 0u8;
            for sy in 0..h {
                for sx in 0..w {
                    let v = layer.get(Cell::new(sx, sy));
                    if v == 0 {
                        continue;
                    }
                    let (dx, dy) = ((tx - sx) as f64, (ty - sy) as f64);
                    let d = (dx * dx + dy * dy).sqrt() * spec.resolution;
                    best = best.max(oracle_inflation_cost(d, v, p));
                }
            }
            out[(ty * w + tx) as usize] = best;
        }
    }
    out
}

// Plain O(n²) Dijkstra over the 8-connected graph of cells below INSCRIBED.
fn oracle_dijkstra(layer: &CostLayer, s: Cell, t: Cell, weight: f64) -> Option<f64> {
    let spec = layer.spec();
    let (w, h) = (spec.width as i32, spec.height as i32);
    let n = spec.len();
    let idx = |c: Cell| (c.y * w + c.x) as usize;
    if layer.get(s) >= INSCRIBED || layer.get(t) >= INSCRIBED {
        return None;
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[idx(s)] = 0.0;
    loop {
        let mut u = None;
        for i in 0..n {
            if !done[i] && dist[i] < f64::INFINITY && u.is_none_or(|b: usize| dist[i] < dist[b]) {
                u = Some(i);
            }
        }
        let Some(u) = u else { break };
        done[u] = true;
        let c = Cell::new(u as i32 % w, u as i32 / w);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let nc = Cell::new(c.x + dx, c.y + dy);
                if (dx, dy) == (0, 0) || nc.x < 0 || nc.y < 0 || nc.x >= w || nc.y >= h || layer.get(nc) >= INSCRIBED {
                    continue;
                }
                let len = if dx != 0 && dy != 0 { spec.resolution * 2f64.sqrt() } else { spec.resolution };
                let mean = (layer.get(c) as f64 + layer.get(nc) as f64) / 2.0;
                let nd = dist[u] + len + weight * spec.resolution * mean / 255.0;
                if nd < dist[idx(nc)] {
                    dist[idx(nc)] = nd;
                }
            }
        }
    }
    let d = dist[idx(t)];
    d.is_finite().then_some(d)
}

fn random_layer(rng: &mut ChaCha8Rng, resolution: f64) -> CostLayer {
    let w = rng.random_range(1..=15usize);
    let h = rng.random_range(1..=15usize);
    let spec = GridSpec::new(w, h, resolution, Vec2::ZERO).unwrap();
    let density = rng.random_range(0.0..0.5);
    let cells = (0..spec.len())
        .map(|_| {
            if rng.random_bool(density) {
                match rng.random_range(0..4) {
                    0 => LETHAL,
                    1 => INSCRIBED,
                    _ => rng.random_range(1..=253u8),
                }
            } else {
                0
            }
        })
        .collect();
    CostLayer::from_vec(spec, cells).unwrap()
}

// ---- criteria ----

fn criterion_1() -> Check {
    const GRIDS: usize = 1000;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x1f1a7e);
    for case in 0..GRIDS {
        let res = [0.05, 0.1, 0.25][rng.random_range(0..3)];
        let layer = random_layer(&mut rng, res);
        let r_ins = rng.random_range(0.05..0.5);
        let p = InflationParams {
            inscribed_radius: r_ins,
            inflation_radius: r_ins + rng.random_range(0.05..1.5),
            decay: rng.random_range(0.5..10.0),
        };
        let got = inflate_layer(&layer, &p);
        let want = oracle_inflate(&layer, &p);
        ensure!(got.as_slice() == want.as_slice(), "inflation case {case}: mismatch with {p:?}");
    }
    let mut paths = 0;
    let mut unreachable = 0;
    for case in 0..GRIDS {
        let layer = random_layer(&mut rng, 0.1);
        let spec = *layer.spec();
        let cfg = PlannerConfig { cost_weight: [0.0, 1.0, 25.0, 100.0][rng.random_range(0..4)], ..PlannerConfig::default() };
        let s = spec.cell_at(rng.random_range(0..spec.len()));
        let t = spec.cell_at(rng.random_range(0..spec.len()));
        let got = plan_global(&layer, spec.center_of(s), spec.center_of(t), &cfg);
        let want = oracle_dijkstra(&layer, s, t, cfg.cost_weight);
        match (got, want) {
            (Ok(path), Some(d)) => {
                paths += 1;
                ensure!(path.cells.first() == Some(&s) && path.cells.last() == Some(&t), "case {case}: endpoints");
                let mut sum = 0.0;
                for pair in path.cells.windows(2) {
                    let (a, b) = (pair[0], pair[1]);
                    let (dx, dy) = (b.x - a.x, b.y - a.y);
                    ensure!(dx.abs() <= 1 && dy.abs() <= 1 && (dx, dy) != (0, 0), "case {case}: non-adjacent step");
                    ensure!(layer.get(b) < INSCRIBED, "case {case}: path enters an impassable cell");
                    let len = if dx != 0 && dy != 0 { 0.1 * 2f64.sqrt() } else { 0.1 };
                    sum += len + cfg.cost_weight * 0.1 * ((layer.get(a) as f64 + layer.get(b) as f64) / 2.0) / 255.0;
                }
                // the oracle groups the edge arithmetic differently, and
                // equal-cost routes may sum in a different order
                ensure!((sum - path.total_cost).abs() <= 1e-9 * sum.max(1.0), "case {case}: reported cost {} != path sum {sum}", path.total_cost);
                ensure!((path.total_cost - d).abs() <= 1e-9 * d.max(1.0), "case {case}: cost {} != optimum {d}", path.total_cost);
            }
            (Err(PlanError::NoPath | PlanError::StartBlocked), None) => unreachable += 1,
            (got, want) => return Err(format!("case {case}: planner {got:?} vs oracle {want:?}")),
        }
    }
    let secs = started.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1} s");
    Ok(format!("{GRIDS} inflation grids + {GRIDS} planner grids ({paths} paths, {unreachable} unreachable) in {secs:.1} s"))
}

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let spec = GridSpec::new(41, 41, 0.05, Vec2::ZERO).unwrap();
    let src = Cell::new(20, 20);
    for case in 0..200 {
        let r_ins = rng.random_range(0.05..0.4);
        let p = InflationParams {
            inscribed_radius: r_ins,
            inflation_radius: r_ins + rng.random_range(0.05..0.6),
            decay: rng.random_range(0.5..10.0),
        };
        let layer = inflate_sources(&spec, [(src, LETHAL)], &p);
        let mut by_distance: Vec<(f64, u8)> = spec.cells().map(|c| (spec.cell_distance(src, c), layer.get(c))).collect();
        by_distance.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
        for &(d, v) in &by_distance {
            if d == 0.0 {
                ensure!(v == LETHAL, "case {case}: source cell {v}");
            } else if d <= p.inscribed_radius {
                ensure!(v == INSCRIBED, "case {case}: d={d} inside inscribed radius has {v}");
            } else if d > p.inflation_radius {
                ensure!(v == 0, "case {case}: d={d} beyond inflation radius has {v}");
            } else {
                // the decay starts from source - 1, so 254 may round up just outside the band
                ensure!(v <= INSCRIBED, "case {case}: d={d} outside the source has {v}");
            }
        }
        for pair in by_distance.windows(2) {
            ensure!(pair[1].1 <= pair[0].1, "case {case}: cost rises from {:?} to {:?}", pair[0], pair[1]);
        }
    }
    Ok("200 random parameter sets, 1681 cells each".into())
}

fn obstacle_scan(distance: f64) -> LaserScan {
    let mut ranges = vec![None; 360];
    ranges[0] = Some(distance);
    LaserScan { angle_min: 0.0, angle_increment: std::f64::consts::TAU / 360.0, ranges, range_max: 6.0 }
}

fn criterion_3() -> Check {
    let cfg = FilterConfig::default();
    let scan = obstacle_scan(0.2);
    let commands = [
        VelocityCommand::ZERO,
        VelocityCommand { vx: 0.005, vy: 0.0, omega: 0.0 },
        VelocityCommand { vx: 0.006, vy: -0.007, omega: 0.9 },
        VelocityCommand { vx: 0.0, vy: 0.0, omega: -1.2 },
    ];
    for cmd in commands {
        let out = filter(cmd, &scan, &TactileFrame::default(), &FilterState::default(), &cfg, 0.05);
        ensure!(out.command == cmd, "{cmd:?} became {:?}", out.command);
        ensure!(out.state.phase == FilterPhase::Pass && out.events.is_empty(), "state changed for {cmd:?}");
    }
    let moving = VelocityCommand { vx: 0.3, vy: 0.0, omega: 0.0 };
    let out = filter(moving, &scan, &TactileFrame::default(), &FilterState::default(), &cfg, 0.05);
    ensure!(out.command.vx < moving.vx, "moving command was not repelled");
    Ok("static commands pass unchanged with an obstacle at 0.2 m; a moving one is repelled".into())
}

fn criterion_4() -> Check {
    let cfg = FilterConfig::default();
    let dt = 0.05;
    let repulse = (cfg.repulse_time / dt - 1e-9).ceil() as usize;
    let wait = (cfg.wait_time / dt - 1e-9).ceil() as usize;
    ensure!((repulse, wait) == (20, 100), "tick counts {repulse}, {wait}");
    let nominal = VelocityCommand { vx: 0.5, vy: 0.0, omega: 0.2 };
    let scan = LaserScan { angle_min: 0.0, angle_increment: std::f64::consts::TAU / 360.0, ranges: vec![None; 360], range_max: 6.0 };
    let mut touch = TactileFrame::default();
    touch.forces[0] = 10.0;
    let mut state = FilterState::default();
    let mut outputs = Vec::new();
    for tick in 0..wait + 5 {
        let frame = if tick == 0 { touch } else { TactileFrame::default() };
        let out = filter(nominal, &scan, &frame, &state, &cfg, dt);
        outputs.push((out.command, out.state.phase));
        state = out.state;
    }
    let back = VelocityCommand { vx: -cfg.repulse_speed, vy: 0.0, omega: 0.0 };
    for (tick, (cmd, _)) in outputs.iter().enumerate() {
        let want = if tick < repulse {
            back
        } else if tick < wait {
            VelocityCommand::ZERO
        } else {
            nominal
        };
        ensure!(*cmd == want, "tick {tick}: {cmd:?}, expected {want:?}");
    }
    ensure!(outputs[wait].1 == FilterPhase::Pass, "not passing at tick {wait}");
    Ok(format!("{repulse} ticks backing off, zero until tick {wait}, then pass-through"))
}

fn human_footprint_max(s: &Session, id: u32) -> u8 {
    let h = s.world().human(id).unwrap();
    let spec = s.composite().spec();
    spec.cells_within(h.position(), h.radius).into_iter().map(|c| s.composite().get(c)).max().unwrap_or(0)
}

fn criterion_5() -> Check {
    let sc = bundled("touch_while_idle");
    let turn_tol = sc.doc.config.behavior.turn_tolerance;
    let c_h = sc.doc.config.social_costs.get(ADULT).unwrap();
    let mut s = Session::new(sc).unwrap();
    let mut target = None;
    let mut seen = false;
    let mut lethal_before = 0;
    let mut after = 0;
    while s.tick() {
        let detected = s.detections().iter().any(|h| h.id == 1);
        seen |= detected;
        let cost = human_footprint_max(&s, 1);
        if !seen {
            ensure!(cost >= INSCRIBED, "tick {}: undetected human costs {cost}", s.tick_count());
            lethal_before += 1;
        } else if s.filter_state().phase == FilterPhase::Pass || detected {
            ensure!(cost <= c_h, "tick {}: detected human costs {cost} > {c_h}", s.tick_count());
            after += 1;
        }
        if let tactile_nav::behavior::FsmState::TurnToContact { target_heading } = s.fsm() {
            target = Some(target_heading);
        }
    }
    let target = target.ok_or("never turned toward the contact")?;
    let heading = s.world().robot.pose.theta;
    let err = normalize_angle(heading - target).abs();
    ensure!(err < turn_tol, "heading {heading} vs contact direction {target}");
    ensure!(seen && lethal_before > 0 && after > 0, "lethal ticks {lethal_before}, identified ticks {after}");
    let trace = fsm_trace(s.log());
    ensure!(trace == golden("touch_while_idle"), "fsm trace {trace:?}");
    Ok(format!(
        "heading error {err:.3} rad; human lethal for {lethal_before} ticks, <= {c_h} for {after} ticks after identification"
    ))
}

fn run_logged(name: &str) -> (RunReport, Vec<String>) {
    let mut s = Session::new(bundled(name)).unwrap();
    let report = s.run();
    (report, s.take_log())
}

fn criterion_6() -> Check {
    let sc = bundled("two_exits_block");
    ensure!(sc.doc.max_ticks == 3000, "max_ticks {}", sc.doc.max_ticks);
    let (r, log) = run_logged("two_exits_block");
    ensure!(r.outcome == Outcome::GoalReached, "outcome {:?}", r.outcome);
    ensure!(r.escalations == 1, "{} escalations", r.escalations);
    ensure!(r.exit_used.as_deref() == Some("far_exit"), "exit {:?}", r.exit_used);
    ensure!(log.iter().any(|l| l.contains(r#""kind":"plan""#) && l.contains(r#""reason":"escalation""#)), "no replan");
    let trace = fsm_trace(&log);
    ensure!(trace == golden("two_exits_block"), "fsm trace {trace:?}");
    Ok(format!("goal via far exit after {} ticks, path {:.2} m", r.ticks, r.path_length))
}

fn criterion_7() -> Check {
    let (block, _) = run_logged("two_exits_block");
    let (r, log) = run_logged("two_exits_yield");
    ensure!(r.outcome == Outcome::GoalReached, "outcome {:?}", r.outcome);
    ensure!(r.escalations == 0, "{} escalations", r.escalations);
    ensure!(r.exit_used.as_deref() == Some("near_exit"), "exit {:?}", r.exit_used);
    ensure!(r.path_length < block.path_length, "path {} vs {}", r.path_length, block.path_length);
    let trace = fsm_trace(&log);
    ensure!(trace == golden("two_exits_yield"), "fsm trace {trace:?}");
    Ok(format!("goal via near exit, path {:.2} m < {:.2} m", r.path_length, block.path_length))
}

fn criterion_8() -> Check {
    // 6 x 2 m corridor, 1.8 m free between the walls
    let rows: Vec<String> = (0..20)
        .map(|y| if y == 0 || y == 19 { "#".repeat(60) } else { format!("#{}#", ".".repeat(58)) })
        .collect();
    let occupancy = OccupancyGrid::from_rows(&rows).unwrap();
    let spec = GridSpec::new(60, 20, 0.1, Vec2::ZERO).unwrap();
    let infl = InflationParams::default();
    let static_layer = build_static_layer(&occupancy, &spec).unwrap();
    let static_inflated = inflate_layer(&static_layer, &infl);
    let table = SocialCostTable::default();
    let humans: Vec<HumanEstimate> = [0.4, 1.0, 1.6]
        .iter()
        .enumerate()
        .map(|(i, &y)| HumanEstimate {
            id: i as u32 + 1,
            position: Vec2::new(3.0, 0.1 + y),
            heading: std::f64::consts::PI,
            speed: 0.0,
            radius: 0.3,
            class: ADULT.into(),
        })
        .collect();
    let composite = |escalations: &[EscalationRecord]| {
        let semantic = build_semantic_obstacle_layer(&humans, escalations, &table, &spec).unwrap();
        let mut layers = vec![static_layer.clone(), static_inflated.clone(), inflate_layer(&semantic, &infl), semantic];
        for h in &humans {
            let c = if escalations.iter().any(|e| e.human_id == h.id) { LETHAL } else { table.get(ADULT).unwrap() };
            layers.push(proxemic_field(h, c, &ProxemicParams::default(), &spec));
        }
        combine(&layers.iter().collect::<Vec<_>>()).unwrap()
    };
    let (start, goal) = (Vec2::new(0.8, 1.0), Vec2::new(5.2, 1.0));
    let cfg = PlannerConfig::default();

    let open = composite(&[]);
    let spanned = (1..19).all(|y| open.get(Cell::new(30, y)) > 0);
    ensure!(spanned, "humans do not span the corridor");
    let path = plan_global(&open, start, goal, &cfg).map_err(|e| format!("permeable humans: {e}"))?;

    let records: Vec<EscalationRecord> = humans
        .iter()
        .map(|h| EscalationRecord { human_id: h.id, anchor: h.position, footprint_radius: h.radius, created_tick: 0, release_radius: 0.5 })
        .collect();
    let closed = composite(&records);
    let control = plan_global(&closed, start, goal, &cfg);
    ensure!(control == Err(PlanError::NoPath), "lethal control gave {control:?}");
    Ok(format!("path through permeable humans ({} cells); lethal control: NoPath", path.len()))
}

fn criterion_9() -> Check {
    let mut checked = Vec::new();
    for (name, _) in bundled_names() {
        let (a, la) = run_logged(name);
        let (b, lb) = run_logged(name);
        ensure!(la == lb, "{name}: logs differ");
        ensure!(a == b, "{name}: reports differ");
        checked.push(name);
    }
    // the control sequence a live client would send, applied through the
    // same entry points the server uses
    let mut s = Session::new(bundled("two_exits_block")).unwrap();
    let mut seq = 0;
    let mut send = |s: &mut Session, msg: fn(u64) -> ClientMessage| {
        seq += 1;
        s.apply_control(&msg(seq)).unwrap();
    };
    for _ in 0..10 {
        s.tick();
    }
    send(&mut s, |seq| ClientMessage::Pause { seq });
    for _ in 0..3 {
        send(&mut s, |seq| ClientMessage::Step { seq });
        s.tick();
    }
    send(&mut s, |seq| ClientMessage::Resume { seq });
    send(&mut s, |seq| ClientMessage::Teleop { seq, human: 1, vx: 0.0, vy: -0.2 });
    for _ in 0..8 {
        s.tick();
    }
    send(&mut s, |seq| ClientMessage::Teleop { seq, human: 1, vx: 0.0, vy: 0.0 });
    send(&mut s, |seq| ClientMessage::Touch { seq, azimuth: 1.0, force: 6.0 });
    let report = s.run();
    let replay = replay_log(&s.log().join("\n")).map_err(|e| e.to_string())?;
    ensure!(replay.identical(), "replayed log differs at line {:?}", replay.first_difference);
    ensure!(replay.report.as_ref() == Some(&report), "replayed report differs");
    Ok(format!("{} bundled scenarios byte-identical; controlled session replays to the same report", checked.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("costmap oracle equivalence", criterion_1),
        ("inflation band values", criterion_2),
        ("static-mode laser suppression", criterion_3),
        ("contact override timing", criterion_4),
        ("touch while idle", criterion_5),
        ("blocked near exit", criterion_6),
        ("yielding human", criterion_7),
        ("freezing-robot mitigation", criterion_8),
        ("determinism and replay", criterion_9),
    ];
    let mut failed = 0;
    for (i, (title, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match result {
            Ok(detail) => println!("criterion {}: PASS  {title}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {title}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
