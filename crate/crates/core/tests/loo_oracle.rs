use std::collections::BTreeMap;

use monogram_core::archive::{Archive, ArchiveEntry, Metric};
use monogram_core::eval::{leave_one_out, Criterion};
use monogram_core::monogram::{Monogram, Threshold};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute_force(codes: &[(String, String, u64)], i: usize, n: usize) -> Option<String> {
    let mut others: Vec<(u32, &str, &str)> = codes
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, (id, label, bits))| ((bits ^ codes[i].2).count_ones(), id.as_str(), label.as_str()))
        .collect();
    others.sort();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, _, label) in &others[..n] {
        *counts.entry(label).or_default() += 1;
    }
    counts
        .into_iter()
        .find(|&(_, c)| c > n / 2)
        .map(|(l, _)| l.to_owned())
}

#[test]
fn leave_one_out_matches_brute_force() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let codes: Vec<(String, String, u64)> = (0..30)
            .map(|i| {
                let label = rng.random_range(0..3);
                // Class-biased codes with few set bits so ties are common.
                let bits = (0..12).fold(0u64, |acc, _| acc | 1 << rng.random_range(0..8 + 8 * label));
                (format!("case-{i:02}"), format!("class-{label}"), bits)
            })
            .collect();
        let archive = Archive::build(
            Threshold::Zero,
            codes.iter().map(|(id, label, bits)| {
                let real = (0..64).map(|b| if bits >> b & 1 == 1 { 1.0f32 } else { -1.0 }).collect();
                ArchiveEntry::new(id.clone(), label.clone(), Monogram::from_real(real, Threshold::Zero).unwrap())
            }),
        )
        .unwrap();
        let loo = leave_one_out(&archive, Metric::Hamming, &Criterion::STANDARD).unwrap();
        for c in Criterion::STANDARD {
            for (i, pred) in loo.predictions[&c].iter().enumerate() {
                assert_eq!(pred, &brute_force(&codes, i, c.depth()), "seed {seed} case {i} {c}");
            }
        }
    }
}
