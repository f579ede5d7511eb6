use std::cmp::Ordering;

use rand_chacha::ChaCha8Rng;

use crate::models::{sample_streams, LcCost, RssmState};

use super::{ComfortBounds, PlanError, PlanOutcome, RssmZone};

/// One candidate plan with its worst-case sampled trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct BankEntry {
    pub delta: Vec<f64>,
    /// W, the sample with the largest total power.
    pub powers: Vec<f64>,
    pub temps: Vec<f64>,
}

/// Candidate trajectories computed once per planning episode.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBank {
    pub entries: Vec<BankEntry>,
    pub k: usize,
}

/// `|lattice|^(horizon / block)`.
pub fn candidate_count(bounds: &ComfortBounds, horizon: usize, block: usize) -> Result<u128, PlanError> {
    bounds.validate()?;
    if block == 0 || horizon == 0 || horizon % block != 0 {
        return Err(PlanError::Shape(format!("block {block} must divide horizon {horizon}")));
    }
    let base = (bounds.n_steps() + 1) as u128;
    let exp = u32::try_from(horizon / block).unwrap_or(u32::MAX);
    Ok(base.checked_pow(exp).unwrap_or(u128::MAX))
}

struct Branch {
    state: RssmState,
    rng: ChaCha8Rng,
    outputs: Vec<[f64; 2]>,
}

/// Enumerates every block-constant lattice plan and keeps, per plan, the
/// highest-energy trajectory among the zone's `k` samples.
///
/// Plans sharing a prefix share its simulation: each sample's state and
/// random stream are cloned at block boundaries, so every entry equals what
/// [`RssmZone::worst_case`] returns for that plan.
pub fn sdpn_build_bank(zone: &RssmZone, bounds: &ComfortBounds, block: usize, cap: usize) -> Result<TrajectoryBank, PlanError> {
    let h = zone.base_setpoints.len();
    let count = candidate_count(bounds, h, block)?;
    if count > cap as u128 {
        return Err(PlanError::CandidateOverflow { count, cap });
    }
    let count = count as usize;
    let lattice = bounds.lattice();
    let model = zone.model;
    let dists: Vec<_> = zone.dists.iter().map(|d| model.stats.disturbance(d)).collect();
    let n_blocks = h / block;

    let mut best_total = vec![f64::NEG_INFINITY; count];
    let mut best: Vec<Vec<[f64; 2]>> = vec![Vec::new(); count];
    let mut steps = 0;
    for rng in sample_streams(zone.seed, zone.k) {
        let mut frontier = vec![Branch {
            state: zone.state.clone(),
            rng,
            outputs: Vec::with_capacity(h),
        }];
        for b in 0..n_blocks {
            let mut next = Vec::with_capacity(frontier.len() * lattice.len());
            for br in &frontier {
                for &v in &lattice {
                    let mut child = Branch {
                        state: br.state.clone(),
                        rng: br.rng.clone(),
                        outputs: br.outputs.clone(),
                    };
                    for t in b * block..(b + 1) * block {
                        let a = model.stats.action(zone.base_setpoints[t] + v);
                        let st = model.step(&child.state, a, &dists[t], &mut child.rng)?;
                        child.state = RssmState { h: st.h, s: st.s };
                        child.outputs.push(model.decode(&child.state));
                        steps += 1;
                    }
                    next.push(child);
                }
            }
            frontier = next;
        }
        for (c, br) in frontier.into_iter().enumerate() {
            let total: f64 = br.outputs.iter().map(|y| model.power_watts(y)).sum();
            if !total.is_finite() {
                return Err(PlanError::NonFinite("sampled power"));
            }
            if total > best_total[c] {
                best_total[c] = total;
                best[c] = br.outputs;
            }
        }
    }
    zone.add_evaluations(steps);

    let entries = best
        .into_iter()
        .enumerate()
        .map(|(c, outputs)| BankEntry {
            delta: candidate_delta(c, &lattice, n_blocks, block),
            powers: outputs.iter().map(|y| model.power_watts(y)).collect(),
            temps: outputs.iter().map(|y| model.temp_celsius(y)).collect(),
        })
        .collect();
    Ok(TrajectoryBank { entries, k: zone.k })
}

/// Plan number `c`, read as base-`|lattice|` digits with the first block most significant.
fn candidate_delta(mut c: usize, lattice: &[f64], n_blocks: usize, block: usize) -> Vec<f64> {
    let base = lattice.len();
    let mut digits = vec![0; n_blocks];
    for b in (0..n_blocks).rev() {
        digits[b] = c % base;
        c /= base;
    }
    digits.iter().flat_map(|&d| std::iter::repeat_n(lattice[d], block)).collect()
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Lower score first, then smaller `|delta|`, then lexicographic.
fn rank(a: (f64, &[f64]), b: (f64, &[f64])) -> Ordering {
    a.0.total_cmp(&b.0)
        .then_with(|| norm2(a.1).total_cmp(&norm2(b.1)))
        .then_with(|| {
            a.1.iter()
                .zip(b.1)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

/// Scores every stored trajectory with the local objective and returns the
/// best candidate. Touches no model.
pub fn sdpn_select(bank: &TrajectoryBank, cost: &LcCost) -> Result<PlanOutcome, PlanError> {
    let mut best: Option<(f64, &BankEntry)> = None;
    for e in &bank.entries {
        let u: Vec<f64> = e.powers.iter().map(|p| p / cost.power_scale).collect();
        let score = cost.value(&e.delta, &u);
        if !score.is_finite() {
            return Err(PlanError::NonFinite("candidate score"));
        }
        if best.is_none_or(|(s, b)| rank((score, &e.delta), (s, &b.delta)).is_lt()) {
            best = Some((score, e));
        }
    }
    let (objective, e) = best.ok_or(PlanError::EmptyBank)?;
    Ok(PlanOutcome {
        delta: e.delta.clone(),
        u_pred: e.powers.clone(),
        objective,
        iterations: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ssm::tests::test_stats;
    use crate::models::{Rssm, RssmArch};
    use crate::planners::testutil::dists;
    use crate::planners::HorizonModel;
    use proptest::prelude::*;

    fn rssm(seed: u64) -> Rssm {
        let arch = RssmArch { d_h: 5, d_s: 3, n_lags: 2, head_hidden: 6, decoder_hidden: vec![7] };
        Rssm::new(arch, test_stats(), seed).unwrap()
    }

    fn zone(m: &Rssm, k: usize) -> RssmZone<'_> {
        let mut state = m.initial_state();
        state.h[0] = 0.3;
        state.s[1] = -0.4;
        RssmZone::new(m, state, vec![21.0, 21.0, 20.0, 20.0], dists(4), k, 11).unwrap()
    }

    #[test]
    fn counts_candidates() {
        let b = ComfortBounds::default();
        assert_eq!(candidate_count(&b, 4, 2).unwrap(), 81);
        assert_eq!(candidate_count(&b, 4, 1).unwrap(), 6561);
        assert_eq!(candidate_count(&b, 4, 4).unwrap(), 9);
        assert!(candidate_count(&b, 4, 3).is_err());
        assert_eq!(candidate_count(&b, 400, 1).unwrap(), u128::MAX);
        let m = rssm(0);
        assert!(matches!(
            sdpn_build_bank(&zone(&m, 2), &b, 2, 80),
            Err(PlanError::CandidateOverflow { count: 81, cap: 80 })
        ));
    }

    #[test]
    fn bank_matches_independent_rescan() {
        let m = rssm(4);
        let z = zone(&m, 6);
        let b = ComfortBounds::default();
        let bank = sdpn_build_bank(&z, &b, 2, 100_000).unwrap();
        assert_eq!(bank.entries.len(), 81);
        // 9 first blocks plus 81 second blocks of 2 steps for each sample
        assert_eq!(z.evaluations(), 6 * 2 * (9 + 81));
        let mut seen = std::collections::BTreeSet::new();
        for e in &bank.entries {
            assert!(e.delta.iter().all(|d| b.is_on_lattice(*d)));
            assert_eq!(e.delta[0], e.delta[1]);
            assert_eq!(e.delta[2], e.delta[3]);
            seen.insert(e.delta.iter().map(|d| (d * 4.0) as i64).collect::<Vec<_>>());
            let wc = z.worst_case(&e.delta).unwrap();
            assert_eq!(e.powers, wc.powers);
            assert_eq!(e.temps, wc.temps);
            let samples = m.rollout_samples_seeded(&z.state, &[21.0 + e.delta[0], 21.0 + e.delta[1], 20.0 + e.delta[2], 20.0 + e.delta[3]], &z.dists, 6, 11).unwrap();
            let top = samples.iter().map(|s| s.iter().sum::<f64>()).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(e.powers.iter().sum::<f64>(), top);
        }
        assert_eq!(seen.len(), 81);
    }

    fn rescan(bank: &TrajectoryBank, cost: &LcCost) -> Vec<f64> {
        let mut scored: Vec<(f64, f64, &Vec<f64>)> = bank
            .entries
            .iter()
            .map(|e| {
                let u: Vec<f64> = e.powers.iter().map(|p| p / cost.power_scale).collect();
                (cost.value(&e.delta, &u), e.delta.iter().map(|d| d * d).sum(), &e.delta)
            })
            .collect();
        scored.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap()
                .then(a.1.partial_cmp(&b.1).unwrap())
                .then(a.2.partial_cmp(b.2).unwrap())
        });
        scored[0].2.clone()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn selection_matches_exhaustive_rescan(
            seed in 0u64..50,
            targets in proptest::collection::vec(0.0f64..3.0, 4),
            duals in proptest::collection::vec(-3.0f64..3.0, 4),
            rho in 0.5f64..80.0,
        ) {
            let m = rssm(seed);
            let z = zone(&m, 3);
            let bank = sdpn_build_bank(&z, &ComfortBounds::default(), 2, 1000).unwrap();
            let cost = LcCost { duals, targets, rho, power_scale: m.stats.power_scale() };
            let before = z.evaluations();
            let a = sdpn_select(&bank, &cost).unwrap();
            let b = sdpn_select(&bank, &cost).unwrap();
            prop_assert_eq!(z.evaluations(), before);
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.delta, rescan(&bank, &cost));
        }
    }

    #[test]
    fn matching_target_wins_with_zero_duals() {
        let m = rssm(9);
        let z = zone(&m, 4);
        let bank = sdpn_build_bank(&z, &ComfortBounds::default(), 2, 1000).unwrap();
        let scale = m.stats.power_scale();
        for pick in [0, 40, 80] {
            let e = &bank.entries[pick];
            let cost = LcCost {
                duals: vec![0.0; 4],
                targets: e.powers.iter().map(|p| p / scale).collect(),
                rho: 1e6,
                power_scale: scale,
            };
            let plan = sdpn_select(&bank, &cost).unwrap();
            let d2 = |d: &[f64]| d.iter().map(|x| x * x).sum::<f64>();
            assert!(plan.delta == e.delta || d2(&plan.delta) < d2(&e.delta), "pick {pick}");
        }
    }

    #[test]
    fn empty_bank_is_an_error() {
        let cost = LcCost { duals: vec![0.0; 4], targets: vec![0.0; 4], rho: 1.0, power_scale: 1.0 };
        assert!(matches!(sdpn_select(&TrajectoryBank { entries: vec![], k: 1 }, &cost), Err(PlanError::EmptyBank)));
    }
}
