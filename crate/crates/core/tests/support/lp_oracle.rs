//! Independent references for the closest-point velocity solve.
//!
//! `kkt_optimum` enumerates every candidate an optimum of a disc plus
//! half-plane program can sit at (interior point, one active line, the
//! circle, two active lines, a line and the circle) and keeps the closest
//! feasible one. `sampled_optimum` searches a dense polar grid of the disc
//! and refines by shrinking local search. Neither shares code with the
//! incremental solver.
#![allow(dead_code)]

use crowdfilter_core::rvo::HalfPlane;
use crowdfilter_core::Vec2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn is_feasible(hs: &[HalfPlane], max_speed: f64, v: Vec2, tol: f64) -> bool {
    v.length() <= max_speed + tol && hs.iter().all(|h| (v - h.point).dot(h.normal) >= -tol)
}

fn line_circle(h: &HalfPlane, r: f64) -> Vec<Vec2> {
    // Points on the line: point + t * dir.
    let dir = Vec2::new(-h.normal.y, h.normal.x);
    let b = h.point.dot(dir);
    let c = h.point.length_squared() - r * r;
    let disc = b * b - c;
    if disc < 0.0 {
        return Vec::new();
    }
    let s = disc.sqrt();
    vec![h.point + dir * (-b - s), h.point + dir * (-b + s)]
}

fn line_line(a: &HalfPlane, b: &HalfPlane) -> Option<Vec2> {
    // n_a . v = n_a . p_a, n_b . v = n_b . p_b
    let det = a.normal.x * b.normal.y - a.normal.y * b.normal.x;
    if det.abs() < 1e-14 {
        return None;
    }
    let ca = a.normal.dot(a.point);
    let cb = b.normal.dot(b.point);
    Some(Vec2::new((ca * b.normal.y - cb * a.normal.y) / det, (a.normal.x * cb - b.normal.x * ca) / det))
}

pub fn kkt_optimum(hs: &[HalfPlane], max_speed: f64, target: Vec2) -> Option<Vec2> {
    let mut candidates = vec![target];
    if let Some(dir) = target.try_normalize() {
        candidates.push(dir * max_speed);
    }
    for (i, h) in hs.iter().enumerate() {
        candidates.push(target - h.normal * (target - h.point).dot(h.normal));
        candidates.extend(line_circle(h, max_speed));
        for g in &hs[i + 1..] {
            candidates.extend(line_line(h, g));
        }
    }
    candidates
        .into_iter()
        .filter(|&v| is_feasible(hs, max_speed, v, 1e-10))
        .min_by(|a, b| a.distance(target).total_cmp(&b.distance(target)))
}

pub fn sampled_optimum(hs: &[HalfPlane], max_speed: f64, target: Vec2, rings: usize, spokes: usize) -> Option<Vec2> {
    let mut best: Option<(f64, Vec2)> = None;
    let consider = |v: Vec2, best: &mut Option<(f64, Vec2)>| {
        if is_feasible(hs, max_speed, v, 0.0) {
            let d = v.distance(target);
            if best.map_or(true, |(bd, _)| d < bd) {
                *best = Some((d, v));
            }
        }
    };
    consider(Vec2::ZERO, &mut best);
    for i in 1..=rings {
        let r = max_speed * i as f64 / rings as f64;
        for k in 0..spokes {
            let a = std::f64::consts::TAU * k as f64 / spokes as f64;
            consider(Vec2::new(r * a.cos(), r * a.sin()), &mut best);
        }
    }
    let (_, mut v) = best?;
    let mut step = max_speed / rings as f64;
    while step > 1e-12 {
        let mut improved = false;
        for k in 0..32 {
            let a = std::f64::consts::TAU * k as f64 / 32.0;
            let cand = v + Vec2::new(a.cos(), a.sin()) * step;
            if is_feasible(hs, max_speed, cand, 0.0) && cand.distance(target) < v.distance(target) {
                v = cand;
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Some(v)
}

/// 1..=8 random half-planes through the speed disc, a random speed limit
/// and a preferred velocity up to twice that limit.
pub fn random_lp(rng: &mut ChaCha8Rng) -> (Vec<HalfPlane>, f64, Vec2) {
    let max_speed = rng.random_range(0.5..3.0);
    let n = rng.random_range(1..=8);
    let hs = (0..n)
        .map(|_| {
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            HalfPlane {
                point: Vec2::new(rng.random_range(-max_speed..max_speed), rng.random_range(-max_speed..max_speed)),
                normal: Vec2::new(a.cos(), a.sin()),
            }
        })
        .collect();
    let v_desire = Vec2::new(rng.random_range(-2.0 * max_speed..2.0 * max_speed), rng.random_range(-2.0 * max_speed..2.0 * max_speed));
    (hs, max_speed, v_desire)
}
