//! Snowflake-type curves built from the unit square by generation-wise
//! segment replacement with two options per segment: keep it straight
//! (split into four collinear quarters) or bump it outward (four segments
//! of length `p * L` forming a symmetric tent). Tent triangles are recorded
//! in a forest so meshes on a truncated generation can later be extended by
//! "descendant" material.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DomainSpec, Point2};
use crate::tri::Triangle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    Straight,
    Bump,
}

/// Replacement rule for one generation: the same rule for every segment, or
/// one rule per segment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GenerationRule {
    Uniform(Rule),
    PerSegment(Vec<Rule>),
}

impl GenerationRule {
    fn rule_for(&self, seg: usize) -> Rule {
        match self {
            GenerationRule::Uniform(r) => *r,
            GenerationRule::PerSegment(v) => v[seg],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnowflakePlan {
    pub p: f64,
    pub rules: Vec<GenerationRule>,
}

impl SnowflakePlan {
    pub fn new(p: f64, rules: Vec<GenerationRule>) -> Result<Self> {
        let plan = SnowflakePlan { p, rules };
        plan.validate()?;
        Ok(plan)
    }

    pub fn uniform(p: f64, rules: &[Rule]) -> Result<Self> {
        SnowflakePlan::new(p, rules.iter().map(|&r| GenerationRule::Uniform(r)).collect())
    }

    pub fn all_bump(p: f64, n: usize) -> Result<Self> {
        SnowflakePlan::uniform(p, &vec![Rule::Bump; n])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.25 && self.p < 0.5) {
            return Err(Error::Validation(format!(
                "snowflake parameter p must lie in (1/4, 1/2), got {}",
                self.p
            )));
        }
        for (g, rule) in self.rules.iter().enumerate() {
            if let GenerationRule::PerSegment(v) = rule {
                let expect = 4usize * 4usize.pow(g as u32);
                if v.len() != expect {
                    return Err(Error::Validation(format!(
                        "generation {g} rule list has {} entries, expected {expect}",
                        v.len()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn generations(&self) -> usize {
        self.rules.len()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("plan serializes")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let plan: SnowflakePlan = serde_json::from_value(v.clone())?;
        plan.validate()?;
        Ok(plan)
    }
}

/// One directed segment of a generation's curve, with lineage bookkeeping.
#[derive(Debug, Clone, Copy)]
pub struct SegmentRec {
    pub a: Point2,
    pub b: Point2,
    /// Index of this segment's parent in the previous generation.
    pub parent: Option<usize>,
    /// Most recent tent in this segment's lineage, if any.
    pub ancestor_tent: Option<usize>,
}

impl SegmentRec {
    pub fn len(&self) -> f64 {
        self.a.dist(self.b)
    }
}

/// A tent triangle added by a Bump replacement.
#[derive(Debug, Clone)]
pub struct TentRec {
    /// `(m1, apex, m2)`: base between the interior break points, apex outward.
    pub tri: Triangle,
    /// Parent tent (the tent whose replacement polygon hosted this one).
    pub parent: Option<usize>,
    /// Generation at which the tent was added (1-based).
    pub generation: usize,
    /// Index of the replaced segment in `generations[generation - 1]`.
    pub host_segment: usize,
}

#[derive(Debug, Clone)]
pub struct TriangleTree {
    pub nodes: Vec<TentRec>,
}

impl TriangleTree {
    pub fn roots(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].parent.is_none()).collect()
    }

    pub fn children(&self, idx: usize) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].parent == Some(idx)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SnowflakeCurve {
    pub segments: Vec<SegmentRec>,
    pub generation: usize,
}

impl SnowflakeCurve {
    pub fn vertices(&self) -> Vec<Point2> {
        self.segments.iter().map(|s| s.a).collect()
    }

    pub fn perimeter(&self) -> f64 {
        self.segments.iter().map(|s| s.len()).sum()
    }

    pub fn min_segment_length(&self) -> f64 {
        self.segments.iter().map(|s| s.len()).fold(f64::INFINITY, f64::min)
    }

    pub fn enclosed_area(&self) -> f64 {
        0.5 * self.segments.iter().map(|s| s.a.cross(s.b)).sum::<f64>()
    }

    pub fn to_domain(&self) -> Result<DomainSpec> {
        DomainSpec::new(self.vertices(), vec![], vec![])
    }

    /// Pairwise intersection test over non-adjacent segments, with an x-sweep
    /// to prune. Adjacent segments share exactly one endpoint by construction.
    pub fn is_simple(&self) -> bool {
        let n = self.segments.len();
        let mut order: Vec<usize> = (0..n).collect();
        let min_x = |s: &SegmentRec| s.a.x.min(s.b.x);
        let max_x = |s: &SegmentRec| s.a.x.max(s.b.x);
        order.sort_by(|&i, &j| min_x(&self.segments[i]).total_cmp(&min_x(&self.segments[j])));
        for (oi, &i) in order.iter().enumerate() {
            let si = &self.segments[i];
            let hi = max_x(si);
            for &j in &order[oi + 1..] {
                let sj = &self.segments[j];
                if min_x(sj) > hi {
                    break;
                }
                let adjacent = j == (i + 1) % n || i == (j + 1) % n;
                if adjacent {
                    continue;
                }
                if crate::geometry::segment_segment_distance(si.a, si.b, sj.a, sj.b) < 1e-14 {
                    return false;
                }
            }
        }
        true
    }
}

fn unit_square_segments() -> Vec<SegmentRec> {
    let corners = [
        Point2::new(0.0, 0.0),
        Point2::new(1.0, 0.0),
        Point2::new(1.0, 1.0),
        Point2::new(0.0, 1.0),
    ];
    (0..4)
        .map(|i| SegmentRec {
            a: corners[i],
            b: corners[(i + 1) % 4],
            parent: None,
            ancestor_tent: None,
        })
        .collect()
}

/// Full construction record: every generation's curve plus the tent forest.
#[derive(Debug, Clone)]
pub struct SnowflakeBuild {
    pub plan: SnowflakePlan,
    /// `generations[g]` is the curve after `g` replacement steps.
    pub generations: Vec<Vec<SegmentRec>>,
    pub tents: Vec<TentRec>,
}

impl SnowflakeBuild {
    pub fn run(plan: &SnowflakePlan) -> Result<Self> {
        plan.validate()?;
        let p = plan.p;
        let mut generations = vec![unit_square_segments()];
        let mut tents: Vec<TentRec> = Vec::new();
        for (g, rule) in plan.rules.iter().enumerate() {
            let prev = &generations[g];
            let mut next = Vec::with_capacity(prev.len() * 4);
            for (si, seg) in prev.iter().enumerate() {
                match rule.rule_for(si) {
                    Rule::Straight => {
                        let step = (seg.b - seg.a) * 0.25;
                        for k in 0..4 {
                            next.push(SegmentRec {
                                a: seg.a + step * k as f64,
                                b: if k == 3 { seg.b } else { seg.a + step * (k + 1) as f64 },
                                parent: Some(si),
                                ancestor_tent: seg.ancestor_tent,
                            });
                        }
                    }
                    Rule::Bump => {
                        let len = seg.len();
                        let u = (seg.b - seg.a) / len;
                        // CCW curve: interior on the left, tents point right.
                        let n_out = Point2::new(u.y, -u.x);
                        let pl = p * len;
                        let m1 = seg.a + u * pl;
                        let m2 = seg.b - u * pl;
                        let half_base = 0.5 * (len - 2.0 * pl);
                        let height = (pl * pl - half_base * half_base).sqrt();
                        let apex = (m1 + m2) * 0.5 + n_out * height;
                        let tent_id = tents.len();
                        tents.push(TentRec {
                            tri: Triangle::new(m1, apex, m2),
                            parent: seg.ancestor_tent,
                            generation: g + 1,
                            host_segment: si,
                        });
                        for (a, b) in [(seg.a, m1), (m1, apex), (apex, m2), (m2, seg.b)] {
                            next.push(SegmentRec {
                                a,
                                b,
                                parent: Some(si),
                                ancestor_tent: Some(tent_id),
                            });
                        }
                    }
                }
            }
            generations.push(next);
        }
        let build = SnowflakeBuild { plan: plan.clone(), generations, tents };
        let curve = build.curve(plan.generations());
        if !curve.is_simple() {
            return Err(Error::Numeric(
                "snowflake construction produced a self-intersecting curve".into(),
            ));
        }
        Ok(build)
    }

    pub fn curve(&self, generation: usize) -> SnowflakeCurve {
        SnowflakeCurve {
            segments: self.generations[generation].clone(),
            generation,
        }
    }

    /// Walks segment parents until reaching the requested generation; returns
    /// the ancestor segment index there.
    pub fn ancestor_segment(&self, mut generation: usize, mut seg: usize, target: usize) -> usize {
        while generation > target {
            seg = self.generations[generation][seg].parent.expect("non-root segment has parent");
            generation -= 1;
        }
        seg
    }

    /// Tents added strictly after `generation`, grouped by their ancestor
    /// segment in that generation's curve.
    pub fn descendants_by_segment(&self, generation: usize) -> Vec<(usize, Vec<usize>)> {
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (ti, tent) in self.tents.iter().enumerate() {
            if tent.generation > generation {
                let host_gen = tent.generation - 1;
                let anc = self.ancestor_segment(host_gen, tent.host_segment, generation);
                groups.entry(anc).or_default().push(ti);
            }
        }
        groups.into_iter().collect()
    }
}

/// Builds the curve and its tent forest.
pub fn build_snowflake(plan: &SnowflakePlan) -> Result<(SnowflakeCurve, TriangleTree)> {
    let build = SnowflakeBuild::run(plan)?;
    let curve = build.curve(plan.generations());
    Ok((curve, TriangleTree { nodes: build.tents }))
}

/// Closed-form `(segment_count, perimeter, min_segment_length)`.
///
/// For uniform rules the perimeter is `4 * prod(4 r_g)` and the minimal
/// segment length `prod(r_g)` with `r_g = p` for Bump and `1/4` for Straight;
/// mixed generations are handled by the same per-segment recursion.
pub fn snowflake_stats(plan: &SnowflakePlan) -> Result<(usize, f64, f64)> {
    plan.validate()?;
    let count = 4usize.checked_pow(plan.generations() as u32 + 1).ok_or_else(|| {
        Error::Validation("generation count too large".into())
    })?;
    // lengths[i]: length of segment i in the current generation
    let mut lengths = vec![1.0f64; 4];
    for rule in &plan.rules {
        let mut next = Vec::with_capacity(lengths.len() * 4);
        for (si, &len) in lengths.iter().enumerate() {
            let r = match rule.rule_for(si) {
                Rule::Straight => 0.25,
                Rule::Bump => plan.p,
            };
            for _ in 0..4 {
                next.push(r * len);
            }
        }
        lengths = next;
    }
    let perimeter = crate::quadrature::pairwise_sum(&lengths);
    let min_len = lengths.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((count, perimeter, min_len))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_generation_preserves_square() {
        let plan = SnowflakePlan::uniform(0.3, &[Rule::Straight]).unwrap();
        let (curve, tree) = build_snowflake(&plan).unwrap();
        assert_eq!(curve.segments.len(), 16);
        for s in &curve.segments {
            assert!((s.len() - 0.25).abs() < 1e-15);
        }
        assert!(tree.nodes.is_empty());
        assert!((curve.enclosed_area() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn single_bump_generation() {
        let plan = SnowflakePlan::uniform(0.3, &[Rule::Bump]).unwrap();
        let (curve, tree) = build_snowflake(&plan).unwrap();
        assert_eq!(curve.segments.len(), 16);
        for s in &curve.segments {
            assert!((s.len() - 0.3).abs() < 1e-15);
        }
        assert!((curve.perimeter() - 4.8).abs() < 1e-12);
        assert_eq!(tree.nodes.len(), 4);
        assert!(curve.is_simple());
        // Tents point outward: area grows.
        assert!(curve.enclosed_area() > 1.0);
    }

    #[test]
    fn two_bump_generations() {
        let plan = SnowflakePlan::uniform(0.3, &[Rule::Bump, Rule::Bump]).unwrap();
        let (curve, tree) = build_snowflake(&plan).unwrap();
        assert_eq!(curve.segments.len(), 64);
        for s in &curve.segments {
            assert!((s.len() - 0.09).abs() < 1e-15);
        }
        assert!((curve.perimeter() - 5.76).abs() < 1e-12);
        // 4 roots, 16 second-generation tents
        assert_eq!(tree.nodes.len(), 20);
        assert_eq!(tree.roots().len(), 4);
        for r in tree.roots() {
            assert_eq!(tree.children(r).len(), 4);
        }
    }

    #[test]
    fn stats_examples() {
        let plan = SnowflakePlan::uniform(0.26, &[Rule::Straight; 3]).unwrap();
        let (n, per, min) = snowflake_stats(&plan).unwrap();
        assert_eq!(n, 256);
        assert!((per - 4.0).abs() < 1e-12);
        assert!((min - 1.0 / 64.0).abs() < 1e-15);

        let plan = SnowflakePlan::uniform(0.26, &[Rule::Bump; 3]).unwrap();
        let (n, per, min) = snowflake_stats(&plan).unwrap();
        assert_eq!(n, 256);
        assert!((per - 4.0 * 1.04f64.powi(3)).abs() < 1e-12);
        assert!((min - 0.26f64.powi(3)).abs() < 1e-15);

        let plan = SnowflakePlan::uniform(0.3, &[]).unwrap();
        assert_eq!(snowflake_stats(&plan).unwrap(), (4, 4.0, 1.0));
    }

    #[test]
    fn build_matches_stats_for_rule_mixes() {
        let mixes: Vec<Vec<Rule>> = vec![
            vec![Rule::Bump, Rule::Straight, Rule::Bump],
            vec![Rule::Straight, Rule::Bump],
            vec![Rule::Bump; 4],
        ];
        for rules in mixes {
            for p in [0.26, 0.3, 0.35, 0.45] {
                let plan = SnowflakePlan::uniform(p, &rules).unwrap();
                let (curve, _) = build_snowflake(&plan).unwrap();
                let (n, per, min) = snowflake_stats(&plan).unwrap();
                assert_eq!(curve.segments.len(), n);
                assert!((curve.perimeter() - per).abs() <= 1e-12 * per);
                assert!((curve.min_segment_length() - min).abs() <= 1e-12 * min);
            }
        }
    }

    #[test]
    fn per_segment_rules() {
        let mut rules = vec![Rule::Straight; 4];
        rules[0] = Rule::Bump;
        let plan = SnowflakePlan::new(0.3, vec![GenerationRule::PerSegment(rules)]).unwrap();
        let (curve, tree) = build_snowflake(&plan).unwrap();
        assert_eq!(curve.segments.len(), 16);
        assert_eq!(tree.nodes.len(), 1);
    }

    #[test]
    fn area_nondecreasing_in_generation() {
        for p in [0.26, 0.3, 0.35, 0.45] {
            let plan = SnowflakePlan::all_bump(p, 5).unwrap();
            let build = SnowflakeBuild::run(&plan).unwrap();
            let mut prev = 0.0;
            for g in 0..=5 {
                let area = build.curve(g).enclosed_area();
                assert!(area >= prev - 1e-14, "area decreased at generation {g}");
                prev = area;
            }
        }
    }

    #[test]
    fn simplicity_across_parameters() {
        for p in [0.26, 0.3, 0.35, 0.45] {
            let plan = SnowflakePlan::all_bump(p, 6).unwrap();
            let (curve, _) = build_snowflake(&plan).unwrap();
            assert_eq!(curve.segments.len(), 4 * 4usize.pow(6));
            assert!(curve.is_simple(), "p = {p} self-intersects");
        }
    }

    #[test]
    fn plan_json_round_trip() {
        let plan = SnowflakePlan::uniform(0.3, &[Rule::Bump, Rule::Straight]).unwrap();
        let v = plan.to_json();
        assert_eq!(v["rules"][0], "bump");
        let back = SnowflakePlan::from_json(&v).unwrap();
        assert_eq!(back.generations(), 2);
        assert!(SnowflakePlan::from_json(&serde_json::json!({"p": 0.6, "rules": []})).is_err());
    }

    #[test]
    fn invalid_parameter_rejected() {
        assert!(SnowflakePlan::uniform(0.25, &[Rule::Bump]).is_err());
        assert!(SnowflakePlan::uniform(0.5, &[Rule::Bump]).is_err());
    }
}
