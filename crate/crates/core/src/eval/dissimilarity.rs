use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::archive::{hamming, ArchiveEntry};
use crate::monogram::{CODE_BITS, GRID_SIDE};
use crate::Scalar;

/// Pairwise Hamming distances between two monogram sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DissimilarityMatrix {
    /// `(case_id, label)` per row.
    pub rows: Vec<(String, String)>,
    pub cols: Vec<(String, String)>,
    pub entries: Vec<Vec<u32>>,
}

pub fn xor_dissimilarity<T: Scalar>(a: &[ArchiveEntry<T>], b: &[ArchiveEntry<T>]) -> DissimilarityMatrix {
    let key = |e: &ArchiveEntry<T>| (e.case_id.clone(), e.label.clone());
    DissimilarityMatrix {
        rows: a.iter().map(key).collect(),
        cols: b.iter().map(key).collect(),
        entries: a
            .iter()
            .map(|x| b.iter().map(|y| hamming(x.bits, y.bits)).collect())
            .collect(),
    }
}

impl DissimilarityMatrix {
    /// Mean entry over same-label and different-label pairs. Pairs of a case
    /// with itself are left out. `None` when a group is empty.
    pub fn class_means(&self) -> (Option<f64>, Option<f64>) {
        let (mut intra, mut n_intra, mut inter, mut n_inter) = (0u64, 0u64, 0u64, 0u64);
        for (r, row) in self.rows.iter().zip(&self.entries) {
            for (c, &d) in self.cols.iter().zip(row) {
                if r.0 == c.0 {
                    continue;
                }
                if r.1 == c.1 {
                    intra += u64::from(d);
                    n_intra += 1;
                } else {
                    inter += u64::from(d);
                    n_inter += 1;
                }
            }
        }
        let mean = |s: u64, n: u64| (n > 0).then(|| s as f64 / n as f64);
        (mean(intra, n_intra), mean(inter, n_inter))
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows.len()).all(|i| (0..i).all(|j| self.entries[i][j] == self.entries[j][i]))
    }

    /// Dense CSV. The header row lists `case_id:label` per column; each row
    /// starts with its own `case_id,label`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "case_id,label")?;
        for (id, label) in &self.cols {
            write!(w, ",{id}:{label}")?;
        }
        writeln!(w)?;
        for ((id, label), row) in self.rows.iter().zip(&self.entries) {
            write!(w, "{id},{label}")?;
            for d in row {
                write!(w, ",{d}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Row-major 8x8 grid of bit changes from `a` to `b`: `1` where a 0 became
/// a 1, `-1` where a 1 became a 0, `0` elsewhere.
pub fn xor_bit_grid(a: u64, b: u64) -> [[i8; GRID_SIDE]; GRID_SIDE] {
    let mut grid = [[0i8; GRID_SIDE]; GRID_SIDE];
    for i in 0..CODE_BITS {
        let (x, y) = (a >> i & 1, b >> i & 1);
        grid[i / GRID_SIDE][i % GRID_SIDE] = y as i8 - x as i8;
    }
    grid
}

/// One line per (pair, bit) with a change: `from,to,row,col,change`.
pub fn write_bit_grids_csv<W: Write, T: Scalar>(mut w: W, pairs: &[(&ArchiveEntry<T>, &ArchiveEntry<T>)]) -> std::io::Result<()> {
    writeln!(w, "from,to,row,col,change")?;
    for (a, b) in pairs {
        let grid = xor_bit_grid(a.bits, b.bits);
        for (r, row) in grid.iter().enumerate() {
            for (c, &d) in row.iter().enumerate() {
                if d != 0 {
                    writeln!(w, "{},{},{r},{c},{d}", a.case_id, b.case_id)?;
                }
            }
        }
    }
    Ok(())
}

/// Up to `per_class` entries per label, chosen by a seeded shuffle and
/// returned grouped by label.
pub fn sample_per_class<T: Scalar>(entries: &[ArchiveEntry<T>], per_class: usize, seed: u64) -> Vec<ArchiveEntry<T>> {
    let mut by_label: BTreeMap<&str, Vec<&ArchiveEntry<T>>> = BTreeMap::new();
    for e in entries {
        by_label.entry(e.label.as_str()).or_default().push(e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (_, mut group) in by_label {
        group.sort_by(|a, b| a.case_id.cmp(&b.case_id));
        group.shuffle(&mut rng);
        group.truncate(per_class);
        group.sort_by(|a, b| a.case_id.cmp(&b.case_id));
        out.extend(group.into_iter().cloned());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, label: &str, bits: u64) -> ArchiveEntry<f32> {
        ArchiveEntry {
            case_id: id.into(),
            label: label.into(),
            bits,
            real_code: (0..64).map(|i| if bits >> i & 1 == 1 { 1.0 } else { -1.0 }).collect(),
        }
    }

    #[test]
    fn single_and_complement() {
        let a = [entry("a", "X", 0xDEAD_BEEF)];
        assert_eq!(xor_dissimilarity(&a, &a).entries, vec![vec![0]]);
        let b = [entry("b", "Y", !0xDEAD_BEEF)];
        assert_eq!(xor_dissimilarity(&a, &b).entries, vec![vec![64]]);
    }

    #[test]
    fn self_matrix_symmetric() {
        let set = [entry("a", "X", 1), entry("b", "X", 3), entry("c", "Y", 0xF0)];
        let m = xor_dissimilarity(&set, &set);
        assert!(m.is_symmetric());
        assert!((0..3).all(|i| m.entries[i][i] == 0));
        let (intra, inter) = m.class_means();
        assert_eq!(intra, Some(1.0));
        assert_eq!(inter, Some((5.0 + 6.0 + 5.0 + 6.0) / 4.0));
    }

    #[test]
    fn bit_grid_signs() {
        let g = xor_bit_grid(0b01, 0b10);
        assert_eq!(g[0][0], -1);
        assert_eq!(g[0][1], 1);
        assert_eq!(g.iter().flatten().filter(|&&d| d != 0).count(), 2);
        let g = xor_bit_grid(0, 1 << 63);
        assert_eq!(g[7][7], 1);
    }

    #[test]
    fn csv_layout() {
        let set = [entry("a", "X", 0), entry("b", "Y", 1)];
        let mut buf = Vec::new();
        xor_dissimilarity(&set, &set).write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "case_id,label,a:X,b:Y\na,X,0,1\nb,Y,1,0\n");
    }

    #[test]
    fn sampling_is_seeded_and_capped() {
        let set: Vec<_> = (0..30)
            .map(|i| entry(&format!("c{i:02}"), if i < 20 { "A" } else { "B" }, i))
            .collect();
        let s1 = sample_per_class(&set, 5, 9);
        assert_eq!(s1, sample_per_class(&set, 5, 9));
        assert_eq!(s1.len(), 10);
        assert_eq!(sample_per_class(&set, 19, 0).len(), 29);
    }
}
