//! Random tree generation and the genetic operators.

use rand::Rng;

use super::{subtree_end, Expression, GpConfig, Node, Op};

/// Tree-building method used at initialization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitMethod {
    /// Every leaf sits exactly at the target depth.
    Full,
    /// Functions and terminals compete below the root; leaves may appear early.
    Grow,
}

/// Half-and-half initialization: full or grow with equal probability, target
/// depth uniform over `[init_depth_min, init_depth_max]`.
pub fn random_expression<R: Rng + ?Sized>(config: &GpConfig, n_features: usize, rng: &mut R) -> Expression {
    let method = if rng.random_bool(0.5) { InitMethod::Full } else { InitMethod::Grow };
    let depth = rng.random_range(config.init_depth_min..=config.init_depth_max);
    random_with_method(method, depth, n_features, config.constant_range, rng)
}

/// Builds a tree of exactly `depth` (full) or at most `depth` (grow).
///
/// The root is a function whenever `depth >= 2`, so grown trees also reach
/// at least depth 2.
pub fn random_with_method<R: Rng + ?Sized>(
    method: InitMethod,
    depth: usize,
    n_features: usize,
    constant_range: [f64; 2],
    rng: &mut R,
) -> Expression {
    assert!(depth >= 1, "tree depth must be at least 1");
    let mut nodes = Vec::new();
    grow_into(&mut nodes, method, 1, depth, n_features, constant_range, rng);
    Expression::from_nodes_unchecked(nodes)
}

fn grow_into<R: Rng + ?Sized>(
    nodes: &mut Vec<Node>,
    method: InitMethod,
    level: usize,
    depth: usize,
    n_features: usize,
    constant_range: [f64; 2],
    rng: &mut R,
) {
    let want_function = if level >= depth {
        false
    } else if level == 1 || method == InitMethod::Full {
        true
    } else {
        let n_functions = Op::ALL.len();
        let n_terminals = n_features + 1;
        rng.random_range(0..n_functions + n_terminals) < n_functions
    };
    if want_function {
        let op = Op::ALL[rng.random_range(0..Op::ALL.len())];
        nodes.push(Node::Func(op));
        for _ in 0..op.arity() {
            grow_into(nodes, method, level + 1, depth, n_features, constant_range, rng);
        }
    } else {
        nodes.push(random_terminal(n_features, constant_range, rng));
    }
}

/// A feature, or (with probability `1 / (n_features + 1)`) a constant.
fn random_terminal<R: Rng + ?Sized>(n_features: usize, [lo, hi]: [f64; 2], rng: &mut R) -> Node {
    let pick = rng.random_range(0..=n_features);
    if pick == n_features {
        let value = if lo == hi { lo } else { rng.random_range(lo..=hi) };
        Node::Const(value)
    } else {
        Node::Feature(pick)
    }
}

/// Replaces a uniformly chosen subtree of `a` with a uniformly chosen subtree
/// of `b`.
pub fn crossover<R: Rng + ?Sized>(a: &Expression, b: &Expression, rng: &mut R) -> Expression {
    let at = rng.random_range(0..a.len());
    let donor = rng.random_range(0..b.len());
    crossover_at(a, at, b, donor)
}

/// Crossover with explicit splice points (prefix positions).
pub fn crossover_at(a: &Expression, at: usize, b: &Expression, donor: usize) -> Expression {
    let a_end = a.subtree_end(at);
    let b_end = b.subtree_end(donor);
    splice(a.nodes(), at, a_end, &b.nodes()[donor..b_end])
}

/// Subtree mutation: a uniformly chosen subtree is replaced by a freshly grown
/// tree whose depth is drawn from the init range.
pub fn mutate<R: Rng + ?Sized>(parent: &Expression, config: &GpConfig, n_features: usize, rng: &mut R) -> Expression {
    let at = rng.random_range(0..parent.len());
    mutate_at(parent, at, config, n_features, rng)
}

pub fn mutate_at<R: Rng + ?Sized>(
    parent: &Expression,
    at: usize,
    config: &GpConfig,
    n_features: usize,
    rng: &mut R,
) -> Expression {
    let depth = rng.random_range(config.init_depth_min..=config.init_depth_max);
    let fresh = random_with_method(InitMethod::Grow, depth, n_features, config.constant_range, rng);
    let end = parent.subtree_end(at);
    splice(parent.nodes(), at, end, fresh.nodes())
}

fn splice(base: &[Node], start: usize, end: usize, insert: &[Node]) -> Expression {
    let mut nodes = Vec::with_capacity(base.len() - (end - start) + insert.len());
    nodes.extend_from_slice(&base[..start]);
    nodes.extend_from_slice(insert);
    nodes.extend_from_slice(&base[end..]);
    debug_assert_eq!(subtree_end(&nodes, 0), nodes.len());
    Expression::from_nodes_unchecked(nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn leaf_depths(e: &Expression) -> Vec<usize> {
        e.nodes().iter().zip(e.node_depths()).filter(|(n, _)| n.is_terminal()).map(|(_, d)| d).collect()
    }

    #[test]
    fn depth_one_is_a_terminal() {
        let cfg = GpConfig { init_depth_min: 1, init_depth_max: 1, ..GpConfig::default() };
        let mut r = rng(1);
        for _ in 0..200 {
            let e = random_expression(&cfg, 3, &mut r);
            assert_eq!(e.len(), 1);
            assert!(e.nodes()[0].is_terminal());
        }
    }

    #[test]
    fn full_method_places_leaves_at_depth() {
        let mut r = rng(2);
        for _ in 0..200 {
            let e = random_with_method(InitMethod::Full, 2, 4, [-1000.0, 1000.0], &mut r);
            assert!(leaf_depths(&e).iter().all(|&d| d == 2));
            let e = random_with_method(InitMethod::Full, 5, 4, [-1000.0, 1000.0], &mut r);
            assert!(leaf_depths(&e).iter().all(|&d| d == 5));
        }
    }

    #[test]
    fn half_and_half_depth_bounds() {
        let cfg = GpConfig::default();
        let mut r = rng(3);
        let (mut lo, mut hi) = (usize::MAX, 0);
        for _ in 0..10_000 {
            let d = random_expression(&cfg, 4, &mut r).depth();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        assert!(lo >= 2, "min depth {lo}");
        assert!(hi <= 6, "max depth {hi}");
        assert_eq!((lo, hi), (2, 6));
    }

    #[test]
    fn same_seed_same_trees() {
        let cfg = GpConfig::default();
        let a: Vec<_> = (0..50)
            .map({
                let mut r = rng(9);
                move |_| random_expression(&cfg, 3, &mut r)
            })
            .collect();
        let cfg = GpConfig::default();
        let b: Vec<_> = (0..50)
            .map({
                let mut r = rng(9);
                move |_| random_expression(&cfg, 3, &mut r)
            })
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn crossover_of_lone_terminal_is_identity() {
        let t = Expression::feature(2);
        let mut r = rng(4);
        assert_eq!(crossover(&t, &t, &mut r), t);
    }

    #[test]
    fn crossover_splices_donor_subtree() {
        let a = Expression::binary(Op::Add, Expression::feature(0), Expression::constant(1.0));
        let b = Expression::unary(Op::Sqrt, Expression::feature(1));
        let child = crossover_at(&a, 2, &b, 0);
        assert_eq!(
            child,
            Expression::binary(Op::Add, Expression::feature(0), Expression::unary(Op::Sqrt, Expression::feature(1)))
        );
        // parents untouched
        assert_eq!(a.len(), 3);
    }

    #[test]
    fn crossover_sweep_keeps_invariants() {
        let cfg = GpConfig::default();
        let mut r = rng(5);
        let a = random_expression(&cfg, 3, &mut r);
        let b = random_expression(&cfg, 3, &mut r);
        for _ in 0..1000 {
            let child = crossover(&a, &b, &mut r);
            let rebuilt = Expression::from_nodes(child.nodes().to_vec()).unwrap();
            assert_eq!(rebuilt, child);
            // every node comes from one of the parents
            for n in child.nodes() {
                assert!(a.nodes().contains(n) || b.nodes().contains(n));
            }
            assert!(child.max_feature().is_none_or(|i| i < 3));
        }
    }

    #[test]
    fn mutate_at_root_replaces_everything() {
        let cfg = GpConfig::default();
        let parent = Expression::binary(Op::Mul, Expression::feature(0), Expression::feature(0));
        let mut r = rng(6);
        let child = mutate_at(&parent, 0, &cfg, 1, &mut r);
        let mut replay = rng(6);
        let depth = replay.random_range(cfg.init_depth_min..=cfg.init_depth_max);
        let fresh = random_with_method(InitMethod::Grow, depth, 1, cfg.constant_range, &mut replay);
        assert_eq!(child, fresh);
    }

    #[test]
    fn mutation_sweep_keeps_constants_in_range() {
        let cfg = GpConfig::default();
        let mut r = rng(7);
        let mut e = random_expression(&cfg, 2, &mut r);
        for _ in 0..1000 {
            let child = mutate(&e, &cfg, 2, &mut r);
            assert!(child.constants().all(|c| (-1000.0..=1000.0).contains(&c)));
            Expression::from_nodes(child.nodes().to_vec()).unwrap();
            // keep trees from growing without bound across the sweep
            if child.len() < 200 {
                e = child;
            }
        }
    }
}
