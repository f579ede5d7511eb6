use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EXCITATION_MIN: f64 = 17.0;
pub const EXCITATION_MAX: f64 = 23.0;
pub const EXCITATION_RESOLUTION: f64 = 0.25;
pub const HOLD_MIN: usize = 4;
pub const HOLD_MAX: usize = 192;

/// Piecewise-constant random setpoints for each zone. Levels are drawn on a
/// 0.25 °C lattice over [17, 23] and held for 4 to 192 steps; consecutive
/// holds always differ in level. Zones use independent streams of `seed`.
pub fn excitation_schedule(n_zones: usize, duration: usize, seed: u64) -> Vec<Vec<f64>> {
    let n_levels = ((EXCITATION_MAX - EXCITATION_MIN) / EXCITATION_RESOLUTION).round() as u32;
    (0..n_zones)
        .map(|zone| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(zone as u64);
            let mut out = Vec::with_capacity(duration);
            let mut last: Option<u32> = None;
            while out.len() < duration {
                let level = loop {
                    let l = rng.random_range(0..=n_levels);
                    if Some(l) != last {
                        break l;
                    }
                };
                last = Some(level);
                let hold = rng.random_range(HOLD_MIN..=HOLD_MAX);
                let value = EXCITATION_MIN + EXCITATION_RESOLUTION * level as f64;
                let take = hold.min(duration - out.len());
                out.extend(std::iter::repeat_n(value, take));
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn runs(s: &[f64]) -> Vec<usize> {
        let mut out = Vec::new();
        let mut len = 0;
        for k in 0..s.len() {
            len += 1;
            if k + 1 == s.len() || s[k + 1] != s[k] {
                out.push(len);
                len = 0;
            }
        }
        out
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(excitation_schedule(3, 1000, 7), excitation_schedule(3, 1000, 7));
        assert_ne!(excitation_schedule(3, 1000, 7), excitation_schedule(3, 1000, 8));
    }

    #[test]
    fn zones_are_not_copies() {
        let s = excitation_schedule(2, 2000, 1);
        assert_ne!(s[0], s[1]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn levels_and_holds_in_range(n_zones in 1usize..4, duration in 0usize..3000, seed in any::<u64>()) {
            let s = excitation_schedule(n_zones, duration, seed);
            prop_assert_eq!(s.len(), n_zones);
            for z in &s {
                prop_assert_eq!(z.len(), duration);
                for &v in z {
                    prop_assert!((EXCITATION_MIN..=EXCITATION_MAX).contains(&v));
                    let k = (v - EXCITATION_MIN) / EXCITATION_RESOLUTION;
                    prop_assert!((k - k.round()).abs() < 1e-9);
                }
                let r = runs(z);
                // the final run may be cut off by the end of the schedule
                if r.len() > 1 {
                    for &len in &r[..r.len() - 1] {
                        prop_assert!((HOLD_MIN..=HOLD_MAX).contains(&len));
                    }
                }
                if let Some(&last) = r.last() {
                    prop_assert!(last <= HOLD_MAX);
                }
            }
        }
    }
}
