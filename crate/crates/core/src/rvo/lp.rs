//! Closest-point 2D linear programming over half-planes and a speed disc.
//!
//! Constraints are processed incrementally in the given order. When the
//! current optimum violates a constraint, the new optimum lies on that
//! constraint's boundary line, so it is found by a 1D solve along the line
//! against the constraints seen so far. If some line admits no feasible
//! point the region is empty and a second pass minimizes the largest
//! violation instead.

use super::HalfPlane;
use crate::Vec2;
use alloc::vec::Vec;

const PARALLEL_EPS: f64 = 1e-12;

/// Result of the constrained velocity solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VelocitySolution {
    /// The closest permitted velocity to the desired one.
    Feasible(Vec2),
    /// No velocity satisfies every constraint; carries the velocity within
    /// the speed disc that minimizes the largest violation.
    Infeasible(Vec2),
}

impl VelocitySolution {
    pub fn velocity(self) -> Vec2 {
        match self {
            VelocitySolution::Feasible(v) | VelocitySolution::Infeasible(v) => v,
        }
    }

    pub fn is_feasible(self) -> bool {
        matches!(self, VelocitySolution::Feasible(_))
    }
}

/// Boundary line with the permitted side on the left of `direction`.
#[derive(Debug, Clone, Copy)]
struct Line {
    point: Vec2,
    direction: Vec2,
}

impl From<&HalfPlane> for Line {
    fn from(h: &HalfPlane) -> Self {
        Line {
            point: h.point,
            direction: Vec2::new(h.normal.y, -h.normal.x),
        }
    }
}

impl Line {
    /// Positive when `v` is on the forbidden side.
    #[inline]
    fn violation(&self, v: Vec2) -> f64 {
        self.direction.det(self.point - v)
    }
}

/// Closest velocity to `v_desire` inside every half-plane with speed at most
/// `max_speed`.
pub fn solve_velocity(halfplanes: &[HalfPlane], max_speed: f64, v_desire: Vec2) -> VelocitySolution {
    let lines: Vec<Line> = halfplanes.iter().map(Line::from).collect();
    match solve_2d(&lines, max_speed, v_desire, false) {
        Ok(v) => VelocitySolution::Feasible(v),
        Err((failed, partial)) => {
            VelocitySolution::Infeasible(solve_min_violation(&lines, failed, partial, max_speed))
        }
    }
}

/// Optimum on line `line_no` subject to lines `0..line_no` and the disc.
fn solve_1d(
    lines: &[Line],
    line_no: usize,
    radius: f64,
    opt: Vec2,
    direction_opt: bool,
) -> Option<Vec2> {
    let line = lines[line_no];
    let dot = line.point.dot(line.direction);
    let discriminant = dot * dot + radius * radius - line.point.length_squared();
    if discriminant < 0.0 {
        return None;
    }
    let sqrt_disc = libm::sqrt(discriminant);
    let mut t_left = -dot - sqrt_disc;
    let mut t_right = -dot + sqrt_disc;

    for prev in &lines[..line_no] {
        let denominator = line.direction.det(prev.direction);
        let numerator = prev.direction.det(line.point - prev.point);
        if denominator.abs() <= PARALLEL_EPS {
            if numerator < 0.0 {
                return None;
            }
            continue;
        }
        let t = numerator / denominator;
        if denominator >= 0.0 {
            t_right = t_right.min(t);
        } else {
            t_left = t_left.max(t);
        }
        if t_left > t_right {
            return None;
        }
    }

    let t = if direction_opt {
        if opt.dot(line.direction) > 0.0 {
            t_right
        } else {
            t_left
        }
    } else {
        (line.direction.dot(opt - line.point)).clamp(t_left, t_right)
    };
    Some(line.point + line.direction * t)
}

/// `Err((index, partial))` names the first line with no feasible point and the
/// optimum over the lines before it.
fn solve_2d(
    lines: &[Line],
    radius: f64,
    opt: Vec2,
    direction_opt: bool,
) -> Result<Vec2, (usize, Vec2)> {
    let mut result = if direction_opt {
        opt * radius
    } else {
        opt.clamp_length(radius)
    };
    for (i, line) in lines.iter().enumerate() {
        if line.violation(result) > 0.0 {
            match solve_1d(lines, i, radius, opt, direction_opt) {
                Some(v) => result = v,
                None => return Err((i, result)),
            }
        }
    }
    Ok(result)
}

/// Minimizes the largest violation over all lines, starting from the partial
/// optimum of the infeasible 2D pass. Each step works in the plane where the
/// violation of line `i` equals that of an earlier line.
fn solve_min_violation(lines: &[Line], begin: usize, mut result: Vec2, radius: f64) -> Vec2 {
    let mut distance = 0.0;
    for i in begin..lines.len() {
        if lines[i].violation(result) <= distance {
            continue;
        }
        let li = lines[i];
        let mut projected = Vec::with_capacity(i);
        for lj in &lines[..i] {
            let determinant = li.direction.det(lj.direction);
            let point = if determinant.abs() <= PARALLEL_EPS {
                if li.direction.dot(lj.direction) > 0.0 {
                    continue;
                }
                (li.point + lj.point) * 0.5
            } else {
                li.point + li.direction * (lj.direction.det(li.point - lj.point) / determinant)
            };
            let Some(direction) = (lj.direction - li.direction).try_normalize() else {
                continue;
            };
            projected.push(Line { point, direction });
        }
        let previous = result;
        let towards = Vec2::new(-li.direction.y, li.direction.x);
        match solve_2d(&projected, radius, towards, true) {
            Ok(v) => result = v,
            Err(_) => result = previous,
        }
        distance = lines[i].violation(result);
    }
    result
}
