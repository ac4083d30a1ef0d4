use nalgebra::DMatrix;

/// Label indices per instance, by descending score; equal scores keep
/// ascending label order.
pub fn rank_labels(scores: &DMatrix<f64>) -> Vec<Vec<usize>> {
    (0..scores.nrows())
        .map(|i| {
            let mut order: Vec<usize> = (0..scores.ncols()).collect();
            order.sort_by(|&a, &b| scores[(i, b)].total_cmp(&scores[(i, a)]).then(a.cmp(&b)));
            order
        })
        .collect()
}
