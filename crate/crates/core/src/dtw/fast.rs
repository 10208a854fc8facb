use super::{align_in_window, check_dims, AlignError, AlignmentPath, DistanceMode, Sequence, Window};
use crate::embedder::EmbeddedTrajectory;

/// FastDTW approximation with the given search radius.
///
/// Sequences of length at most `radius + 2` are aligned exactly. Longer
/// ones are halved by averaging adjacent pairs (an odd tail element is
/// carried over), aligned recursively, and the coarse path, widened by
/// `radius` cells, bounds the exact search at the finer level. The result
/// is always a valid path, so its cost is never below the exact optimum.
pub fn fastdtw_align(
    reference: &EmbeddedTrajectory,
    test: &EmbeddedTrajectory,
    radius: usize,
) -> Result<AlignmentPath, AlignError> {
    let a = Sequence::of(reference, "reference")?;
    let b = Sequence::of(test, "test")?;
    check_dims(&a, &b)?;
    Ok(fast(&a, &b, radius, DistanceMode::Strict))
}

fn fast(a: &Sequence, b: &Sequence, radius: usize, mode: DistanceMode) -> AlignmentPath {
    let min_size = radius + 2;
    if a.len() <= min_size || b.len() <= min_size {
        return align_in_window(a, b, &Window::full(a.len(), b.len()), mode);
    }
    let coarse = fast(&coarsen(a), &coarsen(b), radius, DistanceMode::Coarse);
    let window = expand_window(&coarse.pairs, a.len(), b.len(), radius);
    align_in_window(a, b, &window, mode)
}

fn coarsen(s: &Sequence) -> Sequence {
    let dim = s.dim();
    let mut rows = Vec::with_capacity(s.len().div_ceil(2) * dim);
    let mut i = 0;
    while i < s.len() {
        if i + 1 < s.len() {
            rows.extend(s.row(i).iter().zip(s.row(i + 1)).map(|(x, y)| (x + y) / 2.0));
        } else {
            rows.extend_from_slice(s.row(i));
        }
        i += 2;
    }
    Sequence::from_rows(rows, dim)
}

/// Projects a coarse path onto the `m x n` grid: every coarse cell within
/// `radius` of the path covers its 2x2 block of fine cells.
fn expand_window(coarse: &[(usize, usize)], m: usize, n: usize, radius: usize) -> Window {
    let mut rows = vec![(usize::MAX, 0usize); m];
    let r = radius as isize;
    for &(ci, cj) in coarse {
        for di in -r..=r {
            let Some(i) = ci.checked_add_signed(di) else { continue };
            let (row_lo, row_hi) = (2 * i, 2 * i + 1);
            if row_lo >= m {
                continue;
            }
            let j_lo = (cj as isize - r).max(0) as usize * 2;
            let j_hi = ((cj as isize + r) as usize * 2 + 1).min(n - 1);
            if j_lo > n - 1 {
                continue;
            }
            for entry in &mut rows[row_lo..=row_hi.min(m - 1)] {
                entry.0 = entry.0.min(j_lo);
                entry.1 = entry.1.max(j_hi);
            }
        }
    }
    debug_assert!(rows.iter().all(|&(lo, hi)| lo <= hi), "every fine row is covered");
    Window::from_rows(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dtw::dtw_align;

    #[test]
    fn coarsen_averages_pairs_and_keeps_tail() {
        let s = Sequence::from_rows(vec![1.0, 0.0, 3.0, 2.0, 5.0, 6.0], 2);
        let c = coarsen(&s);
        assert_eq!(c.len(), 2);
        assert_eq!(c.row(0), &[2.0, 1.0]);
        assert_eq!(c.row(1), &[5.0, 6.0]);
    }

    #[test]
    fn full_window_when_radius_large() {
        let r = EmbeddedTrajectory::from_rows("r", &[&[1.0, 0.2], &[0.1, 1.0], &[0.7, 0.7], &[1.0, -0.5], &[0.3, 0.9]]);
        let t = EmbeddedTrajectory::from_rows("t", &[&[0.9, 0.1], &[0.2, 1.0], &[1.0, -0.4]]);
        assert_eq!(fastdtw_align(&r, &t, 5).unwrap(), dtw_align(&r, &t).unwrap());
    }

    #[test]
    fn opposite_vectors_coarsen_to_zero_without_failing() {
        let rows: Vec<&[f64]> = vec![&[1.0, 0.0], &[-1.0, 0.0], &[0.0, 1.0], &[0.0, -1.0], &[1.0, 1.0], &[0.5, 0.2]];
        let r = EmbeddedTrajectory::from_rows("r", &rows);
        let p = fastdtw_align(&r, &r, 0).unwrap();
        assert!(p.is_valid_for(6, 6));
        assert!(p.total_cost >= dtw_align(&r, &r).unwrap().total_cost);
    }
}
