//! Least concave majorant of a sampled graph via the monotone-chain upper hull.

/// Upper hull of points sorted by strictly increasing abscissa.
/// Returns indices of the hull vertices, first and last point included.
pub fn upper_hull(xs: &[f64], ys: &[f64]) -> Vec<usize> {
    debug_assert_eq!(xs.len(), ys.len());
    let mut hull: Vec<usize> = Vec::with_capacity(xs.len());
    for i in 0..xs.len() {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // drop b when it lies on or below the chord a -> i
            let cross = (xs[b] - xs[a]) * (ys[i] - ys[a]) - (ys[b] - ys[a]) * (xs[i] - xs[a]);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    hull
}

/// Majorant evaluated at every sample point.
pub fn majorant_values(xs: &[f64], ys: &[f64], hull: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut seg = 0;
    for (i, &x) in xs.iter().enumerate() {
        while seg + 1 < hull.len() - 1 && xs[hull[seg + 1]] < x {
            seg += 1;
        }
        if hull.len() == 1 {
            out.push(ys[i]);
            continue;
        }
        let (a, b) = (hull[seg], hull[seg + 1]);
        let t = if xs[b] > xs[a] {
            (x - xs[a]) / (xs[b] - xs[a])
        } else {
            0.0
        };
        out.push(ys[a] + t * (ys[b] - ys[a]));
    }
    out
}

/// Sample indices where the graph touches its majorant within `rel_tol`.
pub fn contact_indices(xs: &[f64], ys: &[f64], rel_tol: f64) -> Vec<usize> {
    let hull = upper_hull(xs, ys);
    let maj = majorant_values(xs, ys, &hull);
    (0..xs.len())
        .filter(|&i| maj[i] - ys[i] <= rel_tol * maj[i].abs().max(1.0))
        .collect()
}
