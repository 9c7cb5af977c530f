//! Gradient-boosted regression trees with squared-error loss.
//!
//! Trees are grown greedily: each node takes the (feature, threshold) pair
//! with the largest sum-of-squared-error reduction, candidate thresholds
//! being midpoints of consecutive distinct sorted feature values. Equal
//! reductions resolve to the lowest feature index, then the lowest
//! threshold, so training is deterministic. Boosting fits each tree to the
//! current residuals and adds it with a shrinkage factor; the final
//! prediction is clamped to [0, 1].

use crate::error::GbmError;

/// Row-major feature storage with a fixed column count.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_features: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(n_features: usize) -> Self {
        assert!(n_features >= 1, "need at least one feature column");
        FeatureMatrix { n_features, data: Vec::new() }
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<(), GbmError> {
        let at = self.len();
        if row.len() != self.n_features {
            return Err(GbmError::FeatureCountMismatch {
                expected: self.n_features,
                row: at,
                got: row.len(),
            });
        }
        if let Some(col) = row.iter().position(|v| !v.is_finite()) {
            return Err(GbmError::NonFinite { row: at, col });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn from_rows(n_features: usize, rows: &[Vec<f64>]) -> Result<Self, GbmError> {
        let mut m = FeatureMatrix::new(n_features);
        for row in rows {
            m.push_row(row)?;
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.n_features
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_features..(i + 1) * self.n_features]
    }

    #[inline]
    fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_features + col]
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainingConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub shrinkage: f64,
    /// Reserved for optional row subsampling; unused by the deterministic
    /// default path.
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig { n_trees: 200, max_depth: 3, min_samples_leaf: 5, shrinkage: 0.1, seed: 0 }
    }
}

impl TrainingConfig {
    fn validate(&self) -> Result<(), GbmError> {
        if self.n_trees < 1 {
            return Err(GbmError::Config("n_trees must be >= 1".into()));
        }
        if self.max_depth < 1 {
            return Err(GbmError::Config("max_depth must be >= 1".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(GbmError::Config("min_samples_leaf must be >= 1".into()));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(GbmError::Config("shrinkage must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Tree node. Rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Internal { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

/// One regression tree stored as an arena; index 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    /// Builds a tree from an explicit arena; callers must keep child
    /// indices in range and index 0 as the root.
    pub fn from_nodes(nodes: Vec<Node>) -> Self {
        RegressionTree { nodes }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Internal { feature, threshold, left, right } => {
                    at = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

/// Rows reaching a node: per-feature index lists, each sorted by that
/// feature's value. Sorting happens once at the root; splits partition the
/// lists, which preserves their order.
struct NodeRows {
    by_feature: Vec<Vec<usize>>,
}

impl NodeRows {
    fn root(x: &FeatureMatrix) -> Self {
        let by_feature = (0..x.n_features())
            .map(|f| {
                let mut order: Vec<usize> = (0..x.len()).collect();
                order.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)));
                order
            })
            .collect();
        NodeRows { by_feature }
    }

    fn len(&self) -> usize {
        self.by_feature[0].len()
    }

    fn split(&self, x: &FeatureMatrix, feature: usize, threshold: f64) -> (NodeRows, NodeRows) {
        let mut left = Vec::with_capacity(self.by_feature.len());
        let mut right = Vec::with_capacity(self.by_feature.len());
        for list in &self.by_feature {
            let (l, r): (Vec<usize>, Vec<usize>) =
                list.iter().partition(|&&i| x.get(i, feature) <= threshold);
            left.push(l);
            right.push(r);
        }
        (NodeRows { by_feature: left }, NodeRows { by_feature: right })
    }
}

fn find_best_split(
    x: &FeatureMatrix,
    residuals: &[f64],
    rows: &NodeRows,
    min_leaf: usize,
) -> Option<(usize, f64)> {
    let n = rows.len();
    if n < 2 * min_leaf {
        return None;
    }
    // Identical residuals admit no real improvement; any positive reduction
    // computed below would be rounding noise from the prefix sums.
    let first = residuals[rows.by_feature[0][0]];
    if rows.by_feature[0].iter().all(|&i| residuals[i] == first) {
        return None;
    }
    let total: f64 = rows.by_feature[0].iter().map(|&i| residuals[i]).sum();
    let parent_score = total * total / n as f64;

    let mut best: Option<(f64, usize, f64)> = None;
    for (feature, order) in rows.by_feature.iter().enumerate() {
        let mut left_sum = 0.0;
        for pos in 0..n - 1 {
            left_sum += residuals[order[pos]];
            let v = x.get(order[pos], feature);
            let next = x.get(order[pos + 1], feature);
            if v == next {
                continue;
            }
            let threshold = (v + next) / 2.0;
            // A midpoint that rounds up to `next` would pull the next value
            // block left; the same cut reappears at a later boundary.
            if threshold == next {
                continue;
            }
            let nl = pos + 1;
            let nr = n - nl;
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let reduction = left_sum * left_sum / nl as f64
                + right_sum * right_sum / nr as f64
                - parent_score;
            if reduction > 0.0 && best.map_or(true, |(r, _, _)| reduction > r) {
                best = Some((reduction, feature, threshold));
            }
        }
    }
    best.map(|(_, feature, threshold)| (feature, threshold))
}

fn build_node(
    nodes: &mut Vec<Node>,
    x: &FeatureMatrix,
    residuals: &[f64],
    rows: NodeRows,
    depth: usize,
    cfg: &TrainingConfig,
) -> usize {
    if depth < cfg.max_depth {
        if let Some((feature, threshold)) =
            find_best_split(x, residuals, &rows, cfg.min_samples_leaf)
        {
            let (left_rows, right_rows) = rows.split(x, feature, threshold);
            let at = nodes.len();
            nodes.push(Node::Leaf { value: 0.0 });
            let left = build_node(nodes, x, residuals, left_rows, depth + 1, cfg);
            let right = build_node(nodes, x, residuals, right_rows, depth + 1, cfg);
            nodes[at] = Node::Internal { feature, threshold, left, right };
            return at;
        }
    }
    // Leaf value: mean residual, summed in ascending row order.
    let mut members: Vec<usize> = rows.by_feature[0].clone();
    members.sort_unstable();
    let sum: f64 = members.iter().map(|&i| residuals[i]).sum();
    nodes.push(Node::Leaf { value: sum / members.len() as f64 });
    nodes.len() - 1
}

/// Fits one regression tree to the residuals.
pub fn fit_tree(x: &FeatureMatrix, residuals: &[f64], cfg: &TrainingConfig) -> RegressionTree {
    assert_eq!(x.len(), residuals.len(), "one residual per row");
    assert!(!residuals.is_empty(), "cannot fit a tree to nothing");
    let mut nodes = Vec::new();
    build_node(&mut nodes, x, residuals, NodeRows::root(x), 0, cfg);
    RegressionTree { nodes }
}

/// Boosted ensemble predicting a ratio in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GbmModel {
    base_score: f64,
    shrinkage: f64,
    feature_count: usize,
    trees: Vec<RegressionTree>,
}

impl GbmModel {
    pub fn new(
        base_score: f64,
        shrinkage: f64,
        feature_count: usize,
        trees: Vec<RegressionTree>,
    ) -> Result<Self, GbmError> {
        if !(shrinkage > 0.0 && shrinkage <= 1.0) {
            return Err(GbmError::Config("shrinkage must be in (0, 1]".into()));
        }
        if feature_count < 1 {
            return Err(GbmError::Config("feature_count must be >= 1".into()));
        }
        Ok(GbmModel { base_score, shrinkage, feature_count, trees })
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn shrinkage(&self) -> f64 {
        self.shrinkage
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    /// clamp(base + shrinkage · Σ tree(x), 0, 1).
    pub fn predict(&self, x: &[f64]) -> Result<f64, GbmError> {
        if x.len() != self.feature_count {
            return Err(GbmError::FeatureCountMismatch {
                expected: self.feature_count,
                row: 0,
                got: x.len(),
            });
        }
        let mut sum = 0.0;
        for tree in &self.trees {
            sum += tree.predict(x);
        }
        Ok((self.base_score + self.shrinkage * sum).clamp(0.0, 1.0))
    }
}

/// Trains the boosted model: base score = mean target, then each round fits
/// a tree to the residuals and adds it with shrinkage.
pub fn train_gbm(
    x: &FeatureMatrix,
    y: &[f64],
    cfg: &TrainingConfig,
) -> Result<GbmModel, GbmError> {
    cfg.validate()?;
    if x.len() != y.len() {
        return Err(GbmError::Config(format!(
            "{} feature rows but {} targets",
            x.len(),
            y.len()
        )));
    }
    if y.is_empty() {
        return Err(GbmError::EmptyTrainingSet);
    }
    for (row, &v) in y.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(GbmError::TargetOutOfRange { row, value: v });
        }
    }

    let n = y.len();
    let base_score = y.iter().sum::<f64>() / n as f64;
    let mut current = vec![base_score; n];
    let mut residuals = vec![0.0; n];
    let mut trees = Vec::with_capacity(cfg.n_trees);
    for _ in 0..cfg.n_trees {
        for i in 0..n {
            residuals[i] = y[i] - current[i];
        }
        let tree = fit_tree(x, &residuals, cfg);
        for i in 0..n {
            current[i] += cfg.shrinkage * tree.predict(x.row(i));
        }
        trees.push(tree);
    }
    Ok(GbmModel { base_score, shrinkage: cfg.shrinkage, feature_count: x.n_features(), trees })
}

impl GbmModel {
    /// Versioned text form. Floats use shortest round-trip decimals, so
    /// parsing restores bit-identical values.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "GBM v1 features={} trees={} base={} shrinkage={}\n",
            self.feature_count,
            self.trees.len(),
            self.base_score,
            self.shrinkage
        );
        for tree in &self.trees {
            write_node(&mut out, tree, 0);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, GbmError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| GbmError::Parse { line: 1, reason: "empty input".into() })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 6 || fields[0] != "GBM" || fields[1] != "v1" {
            return Err(GbmError::Parse { line: 1, reason: "bad header".into() });
        }
        let grab = |field: &str, key: &str| -> Result<String, GbmError> {
            field
                .strip_prefix(key)
                .map(str::to_owned)
                .ok_or_else(|| GbmError::Parse { line: 1, reason: format!("expected {key}") })
        };
        let feature_count: usize = grab(fields[2], "features=")?
            .parse()
            .map_err(|_| GbmError::Parse { line: 1, reason: "bad feature count".into() })?;
        let tree_count: usize = grab(fields[3], "trees=")?
            .parse()
            .map_err(|_| GbmError::Parse { line: 1, reason: "bad tree count".into() })?;
        let base_score: f64 = grab(fields[4], "base=")?
            .parse()
            .map_err(|_| GbmError::Parse { line: 1, reason: "bad base score".into() })?;
        let shrinkage: f64 = grab(fields[5], "shrinkage=")?
            .parse()
            .map_err(|_| GbmError::Parse { line: 1, reason: "bad shrinkage".into() })?;
        if feature_count < 1 {
            return Err(GbmError::Parse { line: 1, reason: "feature count must be >= 1".into() });
        }

        let mut trees = Vec::with_capacity(tree_count);
        for _ in 0..tree_count {
            let mut nodes = Vec::new();
            read_node(&mut lines, &mut nodes, feature_count)?;
            trees.push(RegressionTree { nodes });
        }
        if let Some((i, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(GbmError::Parse {
                line: i + 1,
                reason: format!("unexpected trailing content: {extra}"),
            });
        }
        GbmModel::new(base_score, shrinkage, feature_count, trees)
    }
}

fn write_node(out: &mut String, tree: &RegressionTree, at: usize) {
    match tree.nodes[at] {
        Node::Internal { feature, threshold, left, right } => {
            out.push_str(&format!("N {feature} {threshold}\n"));
            write_node(out, tree, left);
            write_node(out, tree, right);
        }
        Node::Leaf { value } => out.push_str(&format!("L {value}\n")),
    }
}

/// Reads one preorder subtree, returning its arena index.
fn read_node(
    lines: &mut std::iter::Enumerate<std::str::Lines<'_>>,
    nodes: &mut Vec<Node>,
    feature_count: usize,
) -> Result<usize, GbmError> {
    let (i, line) = lines
        .next()
        .ok_or_else(|| GbmError::Parse { line: 0, reason: "truncated tree".into() })?;
    let line_no = i + 1;
    let parts: Vec<&str> = line.split_whitespace().collect();
    match parts.as_slice() {
        ["L", value] => {
            let value: f64 = value
                .parse()
                .map_err(|_| GbmError::Parse { line: line_no, reason: "bad leaf value".into() })?;
            nodes.push(Node::Leaf { value });
            Ok(nodes.len() - 1)
        }
        ["N", feature, threshold] => {
            let feature: usize = feature.parse().map_err(|_| GbmError::Parse {
                line: line_no,
                reason: "bad feature index".into(),
            })?;
            if feature >= feature_count {
                return Err(GbmError::Parse {
                    line: line_no,
                    reason: format!("feature index {feature} out of range"),
                });
            }
            let threshold: f64 = threshold.parse().map_err(|_| GbmError::Parse {
                line: line_no,
                reason: "bad threshold".into(),
            })?;
            let at = nodes.len();
            nodes.push(Node::Leaf { value: 0.0 });
            let left = read_node(lines, nodes, feature_count)?;
            let right = read_node(lines, nodes, feature_count)?;
            nodes[at] = Node::Internal { feature, threshold, left, right };
            Ok(at)
        }
        _ => Err(GbmError::Parse { line: line_no, reason: format!("unrecognized line: {line}") }),
    }
}
