//! Mapping arbitrary electrode sets onto the 19 montage targets.
//!
//! Targets are filled, in priority order, by
//! 1. a source with the same (alias-folded) name,
//! 2. a source sitting exactly on the target position,
//! 3. the nearest source when the recording has at least 19 channels,
//! 4. inverse-squared chordal-distance interpolation over all sources otherwise.
//!
//! Nearest-source ties go to the lexicographically smallest source name, and
//! one source may serve several targets.

use ndarray::Array2;

use super::montage::{canonical_name, Montage};
use super::RawTrial;
use crate::error::{data, Result};

const COINCIDENT: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSource {
    Select(usize),
    /// `(source index, weight)`; weights are non-negative and sum to one.
    Interpolate(Vec<(usize, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentPlan {
    pub targets: Vec<ChannelSource>,
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

pub fn plan_alignment(names: &[String], coords: &[[f64; 3]], montage: &Montage) -> Result<AlignmentPlan> {
    if names.is_empty() {
        return Err(data("cannot align a trial with no channels"));
    }
    let keys: Vec<String> = names.iter().map(|n| canonical_name(n)).collect();
    let n_targets = montage.targets().len();
    let mut targets = Vec::with_capacity(n_targets);
    for target in montage.targets() {
        let key = canonical_name(&target.name);
        if let Some(i) = keys.iter().position(|k| *k == key) {
            targets.push(ChannelSource::Select(i));
            continue;
        }
        let dists: Vec<f64> = coords.iter().map(|c| distance(c, &target.pos)).collect();
        let nearest = (0..names.len())
            .min_by(|&a, &b| {
                dists[a]
                    .total_cmp(&dists[b])
                    .then_with(|| names[a].cmp(&names[b]))
            })
            .expect("non-empty");
        if dists[nearest] < COINCIDENT || names.len() >= n_targets {
            targets.push(ChannelSource::Select(nearest));
            continue;
        }
        let inv: Vec<f64> = dists.iter().map(|d| 1.0 / (d * d)).collect();
        let total: f64 = inv.iter().sum();
        targets.push(ChannelSource::Interpolate(
            inv.iter().enumerate().map(|(i, w)| (i, w / total)).collect(),
        ));
    }
    Ok(AlignmentPlan { targets })
}

impl AlignmentPlan {
    pub fn apply(&self, data: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((data.nrows(), self.targets.len()));
        for (j, src) in self.targets.iter().enumerate() {
            match src {
                ChannelSource::Select(i) => out.column_mut(j).assign(&data.column(*i)),
                ChannelSource::Interpolate(weights) => {
                    let mut col = out.column_mut(j);
                    for &(i, w) in weights {
                        col.scaled_add(w, &data.column(i));
                    }
                }
            }
        }
        out
    }
}

/// Produce the 19 montage channels in canonical order.
pub fn align_channels(trial: &RawTrial, montage: &Montage) -> Result<RawTrial> {
    let plan = plan_alignment(&trial.channel_names, &trial.coords, montage)?;
    Ok(RawTrial {
        data: plan.apply(&trial.data),
        channel_names: montage.target_names(),
        coords: montage.targets().iter().map(|e| e.pos).collect(),
        fs: trial.fs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::montage::STANDARD_19;
    use proptest::prelude::*;

    fn trial_from(names: &[&str], data: Array2<f64>) -> RawTrial {
        let m = Montage::standard();
        let names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        let coords = m.positions(&names).unwrap();
        RawTrial::new(data, names, coords, 128.0).unwrap()
    }

    fn ramp(t: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((t, c), |(i, j)| (i * 31 + j * 7) as f64 % 13.0 - 6.0 + j as f64)
    }

    #[test]
    fn standard_names_pass_through() {
        let t = trial_from(&STANDARD_19, ramp(50, 19));
        let out = align_channels(&t, &Montage::standard()).unwrap();
        assert_eq!(out.data, t.data);
    }

    #[test]
    fn alias_and_case_match_select() {
        let mut names = STANDARD_19.to_vec();
        names[7] = "t7";
        names[16] = "P8";
        let t = trial_from(&names, ramp(20, 19));
        let plan = plan_alignment(&t.channel_names, &t.coords, &Montage::standard()).unwrap();
        assert!(plan.targets.iter().enumerate().all(|(j, s)| *s == ChannelSource::Select(j)));
    }

    #[test]
    fn apava_layout_interpolates_midline() {
        let names = [
            "Fp1", "Fp2", "F7", "F3", "F4", "F8", "T3", "C3", "C4", "T4", "T5", "P3", "P4", "T6",
            "O1", "O2",
        ];
        let t = trial_from(&names, ramp(40, 16));
        let m = Montage::standard();
        let plan = plan_alignment(&t.channel_names, &t.coords, &m).unwrap();
        let interpolated: Vec<&str> = plan
            .targets
            .iter()
            .zip(STANDARD_19)
            .filter(|(s, _)| matches!(s, ChannelSource::Interpolate(_)))
            .map(|(_, n)| n)
            .collect();
        assert_eq!(interpolated, vec!["Fz", "Cz", "Pz"]);
        let out = align_channels(&t, &m).unwrap();
        for (j, name) in STANDARD_19.iter().enumerate() {
            if let Some(i) = names.iter().position(|n| n == name) {
                assert_eq!(out.data.column(j), t.data.column(i));
            }
        }
        for src in &plan.targets {
            if let ChannelSource::Interpolate(w) = src {
                let total: f64 = w.iter().map(|p| p.1).sum();
                assert!((total - 1.0).abs() < 1e-9);
                assert!(w.iter().all(|p| p.1 >= 0.0));
            }
        }
    }

    #[test]
    fn equidistant_pair_gives_exact_average() {
        // Fz is equidistant from F3 and F4 by left-right symmetry.
        let data = Array2::from_shape_fn((16, 2), |(i, j)| if j == 0 { i as f64 } else { 100.0 - 3.0 * i as f64 });
        let t = trial_from(&["F3", "F4"], data.clone());
        let out = align_channels(&t, &Montage::standard()).unwrap();
        let fz = STANDARD_19.iter().position(|n| *n == "Fz").unwrap();
        for i in 0..16 {
            let expect = (data[[i, 0]] + data[[i, 1]]) / 2.0;
            assert!((out.data[[i, fz]] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_cap_selects_nearest_with_name_tiebreak() {
        // 19+ channels without 10-20 names: every target picks its nearest source.
        let m = Montage::standard();
        let extras: Vec<String> = m
            .electrodes()
            .iter()
            .skip(19)
            .map(|e| e.name.clone())
            .take(24)
            .collect();
        let coords = m.positions(&extras).unwrap();
        let plan = plan_alignment(&extras, &coords, &m).unwrap();
        for (target, src) in m.targets().iter().zip(&plan.targets) {
            let ChannelSource::Select(i) = src else { panic!("expected select") };
            let best = coords
                .iter()
                .map(|c| distance(c, &target.pos))
                .fold(f64::INFINITY, f64::min);
            assert!((distance(&coords[*i], &target.pos) - best).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_tie_goes_to_smallest_name() {
        let m = Montage::standard();
        let fz = m.position("Fz").unwrap();
        let mut names: Vec<String> = vec!["zz".into(), "aa".into()];
        let mut coords = vec![fz, fz];
        for e in m.electrodes().iter().skip(25).take(17) {
            names.push(e.name.clone());
            coords.push(e.pos);
        }
        let plan = plan_alignment(&names, &coords, &m).unwrap();
        let target = STANDARD_19.iter().position(|n| *n == "Fz").unwrap();
        assert_eq!(plan.targets[target], ChannelSource::Select(1));
    }

    #[test]
    fn empty_trial_is_rejected() {
        assert!(plan_alignment(&[], &[], &Montage::standard()).is_err());
    }

    proptest! {
        #[test]
        fn interpolation_is_convex_and_alignment_idempotent(
            keep in proptest::collection::vec(any::<bool>(), 19),
            seed in 0u64..1000,
        ) {
            let names: Vec<&str> = STANDARD_19.iter().zip(&keep).filter(|(_, k)| **k).map(|(n, _)| *n).collect();
            prop_assume!(!names.is_empty());
            let data = Array2::from_shape_fn((8, names.len()), |(i, j)| {
                (((seed + 1) * 2654435761 + (i * 97 + j * 13) as u64) % 1000) as f64 / 10.0 - 50.0
            });
            let t = trial_from(&names, data.clone());
            let m = Montage::standard();
            let once = align_channels(&t, &m).unwrap();
            for i in 0..8 {
                let row = data.row(i);
                let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                for v in once.data.row(i) {
                    prop_assert!(*v >= lo - 1e-9 && *v <= hi + 1e-9);
                }
            }
            let twice = align_channels(&once, &m).unwrap();
            prop_assert_eq!(twice, once);
        }
    }
}
