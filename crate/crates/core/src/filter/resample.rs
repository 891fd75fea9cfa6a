use alloc::vec::Vec;
use rand::Rng;

use super::{Particle, ParticleSet};

/// Systematic resampling: one uniform offset, `m` evenly spaced pointers
/// into the cumulative weights. Output weights are `1 / m`.
pub fn resample<R: Rng + ?Sized>(pooled: &[Particle], m: usize, timestamp: u64, rng: &mut R) -> ParticleSet {
    assert!(m >= 1 && !pooled.is_empty());
    let offset: f64 = rng.random::<f64>();
    let step = 1.0 / m as f64;
    let weight = step;

    let mut out = Vec::with_capacity(m);
    let mut idx = 0;
    let mut cumulative = pooled[0].weight;
    let last = pooled.len() - 1;
    for i in 0..m {
        let target = (i as f64 + offset) * step;
        while cumulative < target && idx < last {
            idx += 1;
            cumulative += pooled[idx].weight;
        }
        out.push(Particle {
            state: pooled[idx].state,
            weight,
        });
    }
    ParticleSet::new(out, timestamp)
}

/// The `m` heaviest particles (ties keep pool order), renormalized.
pub fn select_top(pooled: &[Particle], m: usize, timestamp: u64) -> ParticleSet {
    assert!(m >= 1 && !pooled.is_empty());
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[b].weight.total_cmp(&pooled[a].weight).then(a.cmp(&b)));
    let mut kept: Vec<Particle> = order.iter().take(m).map(|&i| pooled[i]).collect();
    // Pad by cycling if the pool is smaller than m.
    let mut i = 0;
    while kept.len() < m {
        kept.push(kept[i]);
        i += 1;
    }
    let mut set = ParticleSet::new(kept, timestamp);
    if set.total_weight() > 0.0 {
        set.normalize();
    } else {
        let w = 1.0 / m as f64;
        set.particles.iter_mut().for_each(|p| p.weight = w);
    }
    set
}
