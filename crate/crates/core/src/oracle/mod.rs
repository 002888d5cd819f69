//! Simulation-free computations: the quenched mean transfer, the annealed
//! two-walk second moment, brute-force enumeration of tiny systems and the
//! pathwise check of the `zeta` representation.

mod brute;
mod two_walk;
mod zeta;

use std::collections::{BTreeMap, HashMap};

pub use brute::{
    brute_force_moments, brute_force_moments_capped, brute_force_overlap, occupancy_law, DEFAULT_ENUMERATION_CAP,
};
pub use two_walk::{
    two_walk_series, two_walk_series_exact, two_walk_series_with_radius, DifferenceDp, TwoWalkSeries,
    TwoWalkSeriesExact, DEFAULT_DP_CELL_CAP, DEFAULT_DP_RADIUS,
};
pub use zeta::{verify_zeta_identity, ZetaReport, ZETA_PATH_CAP};

use crate::env::EnvironmentField;
use crate::Site;

/// `E^q[Nbar_{t,x}]` for `t = 0..=T` and the totals `Zbar_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuenchedMeanField {
    pub maps: Vec<BTreeMap<Site, f64>>,
    pub z: Vec<f64>,
}

/// Transfer recursion `E^q[N_{t+1,y}] = sum_{|y-x|=1} E^q[N_{t,x}] m_{t,x} / (2d)`,
/// normalized by `m^t`.
pub fn quenched_mean(field: &EnvironmentField, d: usize, horizon: usize) -> QuenchedMeanField {
    let m = field.model().m();
    let mut cur: HashMap<Site, f64> = HashMap::from([(Site::ORIGIN, 1.0)]);
    let mut maps = vec![cur.iter().map(|(k, v)| (*k, *v)).collect::<BTreeMap<_, _>>()];
    let mut z = vec![1.0];
    for t in 0..horizon as u64 {
        let slice = field.slice(t);
        let mut next: HashMap<Site, f64> = HashMap::with_capacity(cur.len() * 2);
        for (x, &w) in &cur {
            let share = w * slice.pmf_at(x).mean() / (2.0 * d as f64 * m);
            if share == 0.0 {
                continue;
            }
            for dir in 0..2 * d {
                *next.entry(x.step(dir)).or_insert(0.0) += share;
            }
        }
        let map: BTreeMap<Site, f64> = next.iter().map(|(k, v)| (*k, *v)).collect();
        z.push(map.values().sum());
        maps.push(map);
        cur = next;
    }
    QuenchedMeanField { maps, z }
}
