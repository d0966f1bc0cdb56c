use std::collections::BTreeMap;

use monogram_core::archive::{hamming, majority_vote, quorum, Archive, ArchiveEntry, Metric, RetrievalHit};
use monogram_core::datamodel::{make_folds, synth_generate, SynthConfig};
use monogram_core::eval::{compute_metrics, xor_dissimilarity, AbstainPolicy};
use monogram_core::monogram::{binarize, mine_triplets, Monogram, Threshold, Triplet};
use proptest::prelude::*;

fn entry(id: String, label: String, bits: u64) -> ArchiveEntry<f32> {
    let real = (0..64).map(|i| if bits >> i & 1 == 1 { 0.75 } else { -0.25 }).collect();
    ArchiveEntry::new(id, label, Monogram::from_real(real, Threshold::Zero).unwrap())
}

fn brute_force_topk(entries: &[(String, String, u64)], query: u64, k: usize, exclude: Option<&str>) -> Vec<(String, u32)> {
    let mut all: Vec<(u32, String)> = entries
        .iter()
        .filter(|(id, _, _)| Some(id.as_str()) != exclude)
        .map(|(id, _, bits)| ((query ^ bits).count_ones(), id.clone()))
        .collect();
    all.sort();
    all.into_iter().take(k).map(|(d, id)| (id, d)).collect()
}

fn brute_force_mining(labels: &[usize], points: &[Vec<f64>]) -> Vec<Triplet> {
    let d2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut out = Vec::new();
    for a in 0..labels.len() {
        let same: Vec<usize> = (0..labels.len()).filter(|&j| j != a && labels[j] == labels[a]).collect();
        let diff: Vec<usize> = (0..labels.len()).filter(|&j| labels[j] != labels[a]).collect();
        if same.is_empty() || diff.is_empty() {
            continue;
        }
        let far = same.iter().map(|&j| d2(&points[a], &points[j])).fold(f64::MIN, f64::max);
        let near = diff.iter().map(|&j| d2(&points[a], &points[j])).fold(f64::MAX, f64::min);
        let positive = *same.iter().find(|&&j| d2(&points[a], &points[j]) == far).unwrap();
        let negative = *diff.iter().find(|&&j| d2(&points[a], &points[j]) == near).unwrap();
        out.push(Triplet { anchor: a, positive, negative });
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn hamming_is_a_metric(a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
        prop_assert_eq!(hamming(a, b), hamming(b, a));
        prop_assert_eq!(hamming(a, a), 0);
        prop_assert_eq!(hamming(a, b) == 0, a == b);
        prop_assert!(hamming(a, c) <= hamming(a, b) + hamming(b, c));
        prop_assert_eq!(hamming(a, !a), 64);
    }

    #[test]
    fn binarize_matches_threshold(code in prop::collection::vec(-1.0f32..1.0, 64)) {
        let bits = binarize(&code, Threshold::Zero).unwrap();
        for (i, &c) in code.iter().enumerate() {
            prop_assert_eq!(bits >> i & 1 == 1, c > 0.0);
        }
        let half = binarize(&code, Threshold::Half).unwrap();
        prop_assert_eq!(half & !bits, 0);
    }

    #[test]
    fn search_matches_full_scan(
        codes in prop::collection::vec((0u8..3, any::<u16>()), 1..60),
        query in any::<u16>(),
        k in 1usize..15,
        exclude_first in any::<bool>(),
    ) {
        // 16-bit codes force plenty of distance ties.
        let entries: Vec<(String, String, u64)> = codes
            .iter()
            .enumerate()
            .map(|(i, &(l, c))| (format!("c{i:03}"), format!("L{l}"), u64::from(c)))
            .collect();
        let archive = Archive::build(
            Threshold::Zero,
            entries.iter().map(|(id, l, b)| entry(id.clone(), l.clone(), *b)),
        ).unwrap();
        let q = entry("q".into(), "L0".into(), u64::from(query)).monogram();
        let exclude = exclude_first.then(|| entries[0].0.clone());
        let hits = archive.search_topk(&q, k, Metric::Hamming, exclude.as_deref()).unwrap();
        let expected = brute_force_topk(&entries, u64::from(query), k, exclude.as_deref());
        let got: Vec<(String, u32)> = hits.iter().map(|h| (h.case_id.clone(), h.distance as u32)).collect();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn mining_matches_exhaustive_search(
        rows in prop::collection::vec((0usize..3, prop::collection::vec(-4i32..5, 3)), 2..40),
    ) {
        let labels: Vec<usize> = rows.iter().map(|r| r.0).collect();
        let points: Vec<Vec<f64>> = rows.iter().map(|r| r.1.iter().map(|&x| f64::from(x)).collect()).collect();
        let names: Vec<String> = labels.iter().map(|l| format!("L{l}")).collect();
        let refs: Vec<&[f64]> = points.iter().map(Vec::as_slice).collect();
        let classes = labels.iter().collect::<std::collections::BTreeSet<_>>().len();
        match mine_triplets(&names, &refs) {
            Ok(t) => prop_assert_eq!(t, brute_force_mining(&labels, &points)),
            Err(_) => prop_assert!(classes < 2),
        }
    }

    #[test]
    fn self_dissimilarity_is_symmetric(codes in prop::collection::vec(any::<u64>(), 1..20)) {
        let set: Vec<_> = codes.iter().enumerate().map(|(i, &b)| entry(format!("c{i}"), "A".into(), b)).collect();
        let m = xor_dissimilarity(&set, &set);
        prop_assert!(m.is_symmetric());
        for i in 0..set.len() {
            prop_assert_eq!(m.entries[i][i], 0);
        }
    }

    #[test]
    fn metric_report_is_consistent(
        pairs in prop::collection::vec((0u8..4, prop::option::of(0u8..4)), 1..80),
    ) {
        let truth: Vec<String> = pairs.iter().map(|p| format!("L{}", p.0)).collect();
        let preds: Vec<Option<String>> = pairs.iter().map(|p| p.1.map(|l| format!("L{l}"))).collect();
        let m = compute_metrics(&preds, &truth, AbstainPolicy::AsError).unwrap();
        let correct: usize = m.per_class.values().map(|c| c.tp).sum();
        prop_assert!((m.accuracy - correct as f64 / truth.len() as f64).abs() < 1e-12);
        for c in m.per_class.values() {
            let (p, r) = (c.precision(), c.recall());
            let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            prop_assert!((c.f1() - f1).abs() < 1e-12);
        }
        for v in [m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn vote_truth_table() {
    // Every label sequence over three classes for n = 3, 5 and 10.
    for n in [3usize, 5, 10] {
        let q = quorum(n);
        assert_eq!(q, match n { 3 => 2, 5 => 3, _ => 6 });
        for code in 0..3usize.pow(n as u32) {
            let mut c = code;
            let labels: Vec<usize> = (0..n).map(|_| { let l = c % 3; c /= 3; l }).collect();
            let hits: Vec<RetrievalHit> = labels
                .iter()
                .enumerate()
                .map(|(i, l)| RetrievalHit { case_id: format!("h{i}"), label: format!("L{l}"), distance: i as f64 })
                .collect();
            let mut counts = [0usize; 3];
            labels.iter().for_each(|&l| counts[l] += 1);
            let best = *counts.iter().max().unwrap();
            let expected = (best >= q).then(|| format!("L{}", counts.iter().position(|&c| c == best).unwrap()));
            let vote = majority_vote(&hits, n).unwrap();
            assert_eq!(vote.predicted, expected, "labels {labels:?}");
            assert_eq!(vote.support, best);
        }
    }
}

#[test]
fn folds_partition_and_stratify() {
    let ds = synth_generate::<f32>(&SynthConfig { classes: 3, per_class: 17, ..Default::default() }).unwrap();
    for k in [2, 3, 5] {
        let folds = make_folds(&ds, k, 11).unwrap();
        assert_eq!(folds.folds.len(), ds.len());
        let sizes = folds.fold_sizes();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut per: BTreeMap<(usize, &str), usize> = BTreeMap::new();
        for c in ds.cases() {
            *per.entry((folds.fold_of(&c.case_id).unwrap(), c.label.as_str())).or_default() += 1;
        }
        for fold in 0..k {
            for class in ds.classes() {
                let n = per.get(&(fold, class.as_str())).copied().unwrap_or(0);
                assert!(n == 17 / k || n == 17 / k + 1, "fold {fold} class {class}: {n}");
            }
            let (train, test) = folds.split(&ds, fold);
            assert_eq!(train.len() + test.len(), ds.len());
            assert!(train.iter().all(|i| !test.contains(i)));
        }
    }
}
