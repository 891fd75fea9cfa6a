mod support;

use crowdfilter_core::rvo::{
    advance, compute_u, permitted_halfplane, rvo_step, solve_velocity, step_crowd, vo_contains, AgentBody, HalfPlane,
    RvoParams, VelocitySolution,
};
use crowdfilter_core::Vec2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::lp_oracle::{is_feasible, kkt_optimum, random_lp, sampled_optimum};

fn body(p: Vec2, v: Vec2, r: f64) -> AgentBody {
    AgentBody::new(p, v, r, 2.0)
}

fn random_vec(rng: &mut ChaCha8Rng, half: f64) -> Vec2 {
    Vec2::new(rng.random_range(-half..half), rng.random_range(-half..half))
}

fn random_pair(rng: &mut ChaCha8Rng) -> (AgentBody, AgentBody, f64) {
    loop {
        let a = body(random_vec(rng, 4.0), random_vec(rng, 2.0), rng.random_range(0.2..0.5));
        let b = body(random_vec(rng, 4.0), random_vec(rng, 2.0), rng.random_range(0.2..0.5));
        if a.position.distance(b.position) > (a.radius + b.radius) * 1.05 {
            return (a, b, rng.random_range(0.5..4.0));
        }
    }
}

/// Minimum over sampled times `t = k * 1e-3 * tau` of `|t v - p|`.
fn sampled_min_distance(p: Vec2, tau: f64, v: Vec2) -> f64 {
    (0..=1000)
        .map(|k| (v * (k as f64 * 1e-3 * tau) - p).length())
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn vo_membership_matches_time_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for _ in 0..1000 {
        let (a, b, tau) = random_pair(&mut rng);
        let v = random_vec(&mut rng, 4.0);
        let p = b.position - a.position;
        let r = a.radius + b.radius;
        let sampled = sampled_min_distance(p, tau, v);
        // Within one sampling interval of the disc edge the oracle cannot decide.
        if (sampled - r).abs() <= v.length() * tau * 1e-3 {
            continue;
        }
        assert_eq!(vo_contains(&a, &b, tau, v).unwrap(), sampled < r, "{a:?} {b:?} {tau} {v:?}");
        checked += 1;
    }
    assert!(checked > 950);
}

fn in_obstacle(p: Vec2, r: f64, tau: f64, v: Vec2) -> bool {
    // Closest approach of the segment {t v : t in [0, tau]} to p.
    let vv = v.length_squared();
    let t = if vv > 0.0 { (v.dot(p) / vv).clamp(0.0, tau) } else { 0.0 };
    (v * t - p).length() < r
}

/// Distance from `w` to the obstacle boundary by casting rays and bisecting
/// the first membership flip along each.
fn ray_cast_boundary(p: Vec2, r: f64, tau: f64, w: Vec2) -> (f64, Vec2) {
    let start_inside = in_obstacle(p, r, tau, w);
    let first_flip = |dir: Vec2| -> Option<f64> {
        let step = 2e-2;
        let mut s = 0.0;
        while s < 40.0 {
            let next = s + step;
            if in_obstacle(p, r, tau, w + dir * next) != start_inside {
                let (mut lo, mut hi) = (s, next);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if in_obstacle(p, r, tau, w + dir * mid) != start_inside {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return Some(hi);
            }
            s = next;
        }
        None
    };
    let mut best = (f64::INFINITY, 0.0);
    let coarse = 720;
    for k in 0..coarse {
        let a = std::f64::consts::TAU * k as f64 / coarse as f64;
        if let Some(d) = first_flip(Vec2::new(a.cos(), a.sin())) {
            if d < best.0 {
                best = (d, a);
            }
        }
    }
    let span = std::f64::consts::TAU / coarse as f64;
    let mut center = best.1;
    for _ in 0..3 {
        let mut local = (f64::INFINITY, center);
        for k in -100..=100 {
            let a = center + span * k as f64 / 100.0;
            if let Some(d) = first_flip(Vec2::new(a.cos(), a.sin())) {
                if d < local.0 {
                    local = (d, a);
                }
            }
        }
        best = local;
        center = local.1;
    }
    let dir = Vec2::new(best.1.cos(), best.1.sin());
    (best.0, dir * best.0)
}

#[test]
fn u_matches_ray_cast_boundary_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut cases: Vec<(AgentBody, AgentBody, f64)> = vec![(
        body(Vec2::ZERO, Vec2::new(2.0, 0.0), 0.5),
        body(Vec2::new(4.0, 0.0), Vec2::ZERO, 0.5),
        2.0,
    )];
    for _ in 0..60 {
        cases.push(random_pair(&mut rng));
    }
    for (a, b, tau) in cases {
        let proj = compute_u(&a, &b, tau).unwrap();
        let p = b.position - a.position;
        let (dist, u_ray) = ray_cast_boundary(p, a.radius + b.radius, tau, a.velocity - b.velocity);
        assert!((proj.u.length() - dist).abs() < 1e-6, "|u|={} oracle={dist}", proj.u.length());
        let _ = u_ray;
        // u itself must end on the boundary; ties between pieces may pick a different point.
        let (p_r, w) = (a.radius + b.radius, a.velocity - b.velocity);
        if dist > 1e-6 {
            let before = in_obstacle(p, p_r, tau, w + proj.u * (1.0 - 1e-7));
            let after = in_obstacle(p, p_r, tau, w + proj.u * (1.0 + 1e-7));
            assert_ne!(before, after);
        }
        assert!((proj.normal.length() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn u_reflects_with_the_configuration() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let flip = |v: Vec2| Vec2::new(v.x, -v.y);
    for _ in 0..200 {
        let (a, b, tau) = random_pair(&mut rng);
        let ma = body(flip(a.position), flip(a.velocity), a.radius);
        let mb = body(flip(b.position), flip(b.velocity), b.radius);
        let u = compute_u(&a, &b, tau).unwrap().u;
        let mu = compute_u(&ma, &mb, tau).unwrap().u;
        assert!((flip(u) - mu).length() < 1e-9, "{u:?} {mu:?}");
    }
}

#[test]
fn head_on_halfplanes_are_point_mirrors() {
    let a = body(Vec2::new(-2.0, 0.0), Vec2::new(1.5, 0.0), 0.4);
    let b = body(Vec2::new(2.0, 0.0), Vec2::new(-1.5, 0.0), 0.4);
    let ha = permitted_halfplane(&a, &b, 2.0).unwrap();
    let hb = permitted_halfplane(&b, &a, 2.0).unwrap();
    assert!((ha.point + hb.point).length() < 1e-9);
    assert!((ha.normal + hb.normal).length() < 1e-9);
    // Same lateral deviation, opposite sides.
    assert!(ha.point.y.abs() > 1e-3);
    assert!((ha.point.y + hb.point.y).abs() < 1e-9);
}

#[test]
fn halfplane_on_boundary_passes_through_current_velocity() {
    let a = body(Vec2::ZERO, Vec2::new(0.3, 2.0), 0.5);
    let b = body(Vec2::new(4.0, 0.0), Vec2::ZERO, 0.5);
    // Move `a.velocity` onto the boundary first.
    let proj = compute_u(&a, &b, 2.0).unwrap();
    let on_boundary = body(a.position, a.velocity + proj.u, 0.5);
    let h = permitted_halfplane(&on_boundary, &b, 2.0).unwrap();
    assert!((h.point - on_boundary.velocity).length() < 1e-12);
}

fn sample_permitted(rng: &mut ChaCha8Rng, h: &HalfPlane, around: Vec2) -> Vec2 {
    loop {
        let v = around + random_vec(rng, 3.0);
        if h.contains(v) {
            return v;
        }
    }
}

#[test]
fn reciprocal_choices_avoid_collision() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..20 {
        let (a, b, tau) = random_pair(&mut rng);
        let ha = permitted_halfplane(&a, &b, tau).unwrap();
        let hb = permitted_halfplane(&b, &a, tau).unwrap();
        for _ in 0..10_000 {
            let va = sample_permitted(&mut rng, &ha, a.velocity);
            let vb = sample_permitted(&mut rng, &hb, b.velocity);
            assert!(!vo_contains(&a, &b, tau, va - vb).unwrap(), "{a:?} {b:?} {va:?} {vb:?}");
        }
    }
}

#[test]
fn solve_velocity_matches_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut feasible = 0;
    for _ in 0..500 {
        let (hs, max_speed, v_desire) = random_lp(&mut rng);
        let sol = solve_velocity(&hs, max_speed, v_desire);
        match kkt_optimum(&hs, max_speed, v_desire) {
            Some(opt) => {
                feasible += 1;
                let VelocitySolution::Feasible(v) = sol else {
                    panic!("solver reported infeasible, oracle found {opt:?}");
                };
                assert!(is_feasible(&hs, max_speed, v, 1e-9));
                assert!((v - opt).length() < 1e-6, "{v:?} vs {opt:?}");
                // Thin feasible slivers can slip through the grid entirely.
                if let Some(sampled) = sampled_optimum(&hs, max_speed, v_desire, 100, 100) {
                    assert!(v.distance(v_desire) <= sampled.distance(v_desire) + 1e-9);
                }
            }
            None => {
                assert!(!sol.is_feasible(), "solver found {sol:?} but the oracle found nothing");
                assert!(sol.velocity().length() <= max_speed + 1e-9);
            }
        }
    }
    assert!(feasible > 150, "only {feasible} feasible instances");
}

#[test]
fn no_dense_sample_beats_the_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..50 {
        let (hs, max_speed, v_desire) = random_lp(&mut rng);
        let VelocitySolution::Feasible(v) = solve_velocity(&hs, max_speed, v_desire) else {
            continue;
        };
        let best = v.distance(v_desire);
        for i in 1..=100 {
            let r = max_speed * i as f64 / 100.0;
            for k in 0..100 {
                let a = std::f64::consts::TAU * k as f64 / 100.0;
                let s = Vec2::new(r * a.cos(), r * a.sin());
                if is_feasible(&hs, max_speed, s, 0.0) {
                    assert!(s.distance(v_desire) > best - 1e-6);
                }
            }
        }
    }
}

fn min_pair_gap(agents: &[AgentBody]) -> f64 {
    let mut gap = f64::INFINITY;
    for i in 0..agents.len() {
        for j in i + 1..agents.len() {
            let d = agents[i].position.distance(agents[j].position) - agents[i].radius - agents[j].radius;
            gap = gap.min(d);
        }
    }
    gap
}

fn toward(goal: Vec2, from: Vec2, speed: f64, dt: f64) -> Vec2 {
    let d = goal - from;
    if d.length() > speed * dt {
        d * (speed / d.length())
    } else {
        d / dt
    }
}

#[test]
fn head_on_pair_deviates_laterally_without_collision() {
    let params = RvoParams {
        time_horizon: 2.0,
        dt: 0.1,
        neighbor_radius: 10.0,
    };
    let mut agents = vec![
        body(Vec2::new(-2.0, 0.0), Vec2::new(1.5, 0.0), 0.4),
        body(Vec2::new(2.0, 0.0), Vec2::new(-1.5, 0.0), 0.4),
    ];
    let desired = [Vec2::new(1.5, 0.0), Vec2::new(-1.5, 0.0)];
    let va = rvo_step(0, &agents, desired[0], &params).velocity();
    let vb = rvo_step(1, &agents, desired[1], &params).velocity();
    assert!((va + vb).length() < 1e-9);
    assert!(va.y.abs() > 1e-3);
    for _ in 0..100 {
        step_crowd(&mut agents, &desired, &params);
        assert!(min_pair_gap(&agents) >= -1e-9);
        assert!((agents[0].position + agents[1].position).length() < 1e-9);
    }
    assert!(agents[0].position.x > 2.0);
}

#[test]
fn four_agent_antipodal_exchange_is_collision_free() {
    let params = RvoParams {
        time_horizon: 2.0,
        dt: 0.1,
        neighbor_radius: 10.0,
    };
    // A little jitter breaks the fourfold symmetry that would otherwise deadlock.
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let starts: Vec<Vec2> = (0..4)
        .map(|k| Vec2::new(4.0, 0.0).rotate(std::f64::consts::FRAC_PI_2 * k as f64) + random_vec(&mut rng, 0.05))
        .collect();
    let goals: Vec<Vec2> = starts.iter().map(|&p| -p).collect();
    let mut agents: Vec<AgentBody> = starts.iter().map(|&p| body(p, Vec2::ZERO, 0.5)).collect();
    for _ in 0..600 {
        // Small per-step perturbation of the preferred velocity, otherwise
        // the symmetric jam near the centre only unwinds very slowly.
        let desired: Vec<Vec2> = agents
            .iter()
            .zip(&goals)
            .map(|(a, &g)| toward(g, a.position, 1.0, params.dt) + random_vec(&mut rng, 0.05))
            .collect();
        step_crowd(&mut agents, &desired, &params);
        assert!(min_pair_gap(&agents) >= -1e-9);
    }
    for (a, g) in agents.iter().zip(&goals) {
        assert!(a.position.distance(*g) < 0.5, "{:?} did not reach {g:?}", a.position);
    }
}

#[test]
fn rvo_step_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let agents: Vec<AgentBody> = (0..6)
        .map(|k| body(Vec2::new(k as f64 * 1.5, rng.random_range(-1.0..1.0)), random_vec(&mut rng, 1.0), 0.3))
        .collect();
    let a = rvo_step(2, &agents, Vec2::new(1.0, 0.2), &RvoParams::default());
    let b = rvo_step(2, &agents, Vec2::new(1.0, 0.2), &RvoParams::default());
    assert_eq!(a.velocity().x.to_bits(), b.velocity().x.to_bits());
    assert_eq!(a.velocity().y.to_bits(), b.velocity().y.to_bits());
}

#[test]
fn advance_integrates_the_chosen_velocity() {
    let a = body(Vec2::new(1.0, -1.0), Vec2::ZERO, 0.3);
    let next = advance(&a, Vec2::new(1.0, 2.0), 0.4);
    assert!((next.position - Vec2::new(1.4, -0.2)).length() < 1e-15);
    assert_eq!(next.radius, a.radius);
}

fn crowd_strategy() -> impl Strategy<Value = Vec<(f64, f64, f64, f64)>> {
    // Agents on a coarse lattice with jitter, so discs never overlap.
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.5..1.5f64, -1.5..1.5f64), 2..6)
}

proptest! {
    #[test]
    fn rvo_step_is_rotation_and_translation_equivariant(
        jitter in crowd_strategy(),
        angle in 0.0..std::f64::consts::TAU,
        shift in (-20.0..20.0f64, -20.0..20.0f64),
        desire in (-2.0..2.0f64, -2.0..2.0f64),
    ) {
        let params = RvoParams::default();
        let agents: Vec<AgentBody> = jitter
            .iter()
            .enumerate()
            .map(|(k, &(jx, jy, vx, vy))| {
                body(Vec2::new(3.0 * k as f64 + 0.5 * jx, 0.5 * jy), Vec2::new(vx, vy), 0.4)
            })
            .collect();
        let v_desire = Vec2::new(desire.0, desire.1);
        let base = rvo_step(0, &agents, v_desire, &params).velocity();

        let rotated: Vec<AgentBody> = agents
            .iter()
            .map(|a| body(a.position.rotate(angle), a.velocity.rotate(angle), a.radius))
            .collect();
        let rv = rvo_step(0, &rotated, v_desire.rotate(angle), &params).velocity();
        prop_assert!((rv - base.rotate(angle)).length() < 1e-9, "{:?} vs {:?}", rv, base.rotate(angle));

        let offset = Vec2::new(shift.0, shift.1);
        let moved: Vec<AgentBody> = agents
            .iter()
            .map(|a| body(a.position + offset, a.velocity, a.radius))
            .collect();
        let tv = rvo_step(0, &moved, v_desire, &params).velocity();
        prop_assert!((tv - base).length() < 1e-9);
    }
}
