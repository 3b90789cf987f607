//! Small helpers shared across modules.

/// SplitMix64 finalizer.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a master seed and a path of
/// labels. Pure in its inputs; changing one label leaves other paths alone.
pub fn mix_seed(master: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix(master), |acc, &l| splitmix(acc ^ splitmix(l)))
}

/// Formats with 9 significant digits, then prints the shortest decimal
/// representation of the rounded value.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.8e}").parse().unwrap_or(x);
    format!("{rounded}")
}

/// Indices of the `k` largest circular local maxima of `power`, by
/// descending value (ties to the lower index). A bin is a local maximum when
/// it exceeds its left neighbour and is not below its right one, so a flat
/// top counts once. If fewer than `k` maxima exist the remaining slots are
/// filled with the largest other bins.
pub fn top_peaks(power: &[f64], k: usize) -> Vec<usize> {
    let n = power.len();
    let by_value = |a: &usize, b: &usize| power[*b].total_cmp(&power[*a]).then(a.cmp(b));
    let mut peaks: Vec<usize> = if n < 3 {
        (0..n).collect()
    } else {
        (0..n)
            .filter(|&i| {
                let left = power[(i + n - 1) % n];
                let right = power[(i + 1) % n];
                power[i] > left && power[i] >= right
            })
            .collect()
    };
    peaks.sort_by(by_value);
    peaks.truncate(k);
    if peaks.len() < k {
        let mut rest: Vec<usize> = (0..n).filter(|i| !peaks.contains(i)).collect();
        rest.sort_by(by_value);
        peaks.extend(rest.into_iter().take(k - peaks.len()));
    }
    peaks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_label_sensitive() {
        let a = mix_seed(1, &[2, 3]);
        assert_eq!(a, mix_seed(1, &[2, 3]));
        assert_ne!(a, mix_seed(1, &[3, 2]));
        assert_ne!(a, mix_seed(2, &[2, 3]));
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_sig(0.18), "0.18");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_sig(123456789012.0), "123456789000");
        assert_eq!(fmt_sig(0.0), "0");
    }

    #[test]
    fn peaks_and_fallback() {
        let p = [0.0, 3.0, 1.0, 0.5, 2.0, 2.0, 0.1, 4.0];
        assert_eq!(top_peaks(&p, 3), vec![7, 1, 4]);
        let mut one_hot = vec![0.0; 100];
        one_hot[18] = 1.0;
        assert_eq!(top_peaks(&one_hot, 1), vec![18]);
        assert_eq!(top_peaks(&one_hot, 3), vec![18, 0, 1]);
        let mut all = top_peaks(&p, 8);
        all.sort();
        assert_eq!(all, (0..8).collect::<Vec<_>>());
    }
}
