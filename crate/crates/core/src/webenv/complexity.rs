//! Information-theoretic size measures of a page graph.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::webenv::{Environment, Page};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityProfile {
    pub page_count: f64,
    pub edge_count: f64,
    /// H(E|V) in bits.
    pub conditional_link_entropy: f64,
    /// H(web) in bits.
    pub web_entropy: f64,
    /// K̂ in bits.
    pub kolmogorov_estimate: f64,
}

impl ComplexityProfile {
    pub fn of(env: &Environment) -> Self {
        ComplexityProfile {
            page_count: env.page_count() as f64,
            edge_count: env.edge_count() as f64,
            conditional_link_entropy: conditional_link_entropy(env),
            web_entropy: web_entropy(env),
            kolmogorov_estimate: kolmogorov_estimate(env),
        }
    }

    /// Profile carrying only sizes, for comparisons against graphs that are
    /// too large to materialize.
    pub fn from_sizes(page_count: f64, edge_count: f64) -> Self {
        ComplexityProfile {
            page_count,
            edge_count,
            conditional_link_entropy: 0.0,
            web_entropy: 0.0,
            kolmogorov_estimate: 0.0,
        }
    }
}

/// Entropy of a uniform choice among the page's out-links; 0 for dead ends.
pub fn link_entropy(page: &Page) -> f64 {
    let k = page.out_links().count();
    if k == 0 {
        0.0
    } else {
        (k as f64).log2()
    }
}

/// H(E|V) = Σ P(v) H(E|v).
pub fn conditional_link_entropy(env: &Environment) -> f64 {
    env.pages()
        .map(|p| env.visit_distribution()[&p.id] * link_entropy(p))
        .sum()
}

/// Visit entropy plus expected link entropy.
pub fn web_entropy(env: &Environment) -> f64 {
    let visit: f64 = env
        .visit_distribution()
        .values()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum();
    (visit + conditional_link_entropy(env)).max(0.0)
}

pub fn kolmogorov_from(page_count: f64, conditional_link_entropy: f64) -> f64 {
    page_count.log2() + page_count * conditional_link_entropy
}

/// K̂ = log2|V| + |V|·H(E|V).
pub fn kolmogorov_estimate(env: &Environment) -> f64 {
    kolmogorov_from(env.page_count() as f64, conditional_link_entropy(env))
}

/// Ratio of the size-based entropy approximations |V|·log2(|E|/|V|) of two graphs.
pub fn entropy_ratio(a: &ComplexityProfile, b: &ComplexityProfile) -> Result<f64> {
    for (name, p) in [("numerator", a), ("denominator", b)] {
        if p.page_count < 1.0 || p.edge_count < p.page_count {
            return Err(Error::ContractViolation(format!(
                "{name} profile needs |V| >= 1 and |E| >= |V| (got |V|={}, |E|={})",
                p.page_count, p.edge_count
            )));
        }
    }
    let approx = |p: &ComplexityProfile| p.page_count * (p.edge_count / p.page_count).log2();
    let denom = approx(b);
    if denom == 0.0 {
        return Err(Error::DivisionByZero(
            "denominator profile has |E| = |V|".into(),
        ));
    }
    Ok(approx(a) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::webenv::{Element, PageId};

    fn ring_with_two_links(n: u32) -> Environment {
        let pages = (0..n)
            .map(|i| {
                Page::new(
                    i,
                    vec![
                        Element::link(0, PageId((i + 1) % n), vec![]),
                        Element::link(1, PageId((i + 2) % n), vec![]),
                    ],
                    vec![],
                )
            })
            .collect();
        Environment::new(pages, PageId(0), 0.0, 0).unwrap()
    }

    #[test]
    fn uniform_four_pages_two_links() {
        let env = ring_with_two_links(4);
        for p in env.visit_distribution().values() {
            assert!((p - 0.25).abs() < 1e-12);
        }
        assert!((web_entropy(&env) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn single_self_link_is_zero() {
        let page = Page::new(0, vec![Element::link(0, PageId(0), vec![])], vec![]);
        let env = Environment::new(vec![page], PageId(0), 0.0, 0).unwrap();
        assert!(web_entropy(&env).abs() < 1e-12);
        assert!(kolmogorov_estimate(&env).abs() < 1e-12);
    }

    #[test]
    fn kolmogorov_eight_pages() {
        let env = ring_with_two_links(8);
        assert!((kolmogorov_estimate(&env) - 11.0).abs() < 1e-9);
        assert!((kolmogorov_from(8.0, 1.0) - 11.0).abs() < 1e-12);
    }

    #[test]
    fn ratio_cases() {
        let web = ComplexityProfile::from_sizes(1e9, 1e12);
        let atari = ComplexityProfile::from_sizes(1e4, 1e5);
        let r = entropy_ratio(&web, &atari).unwrap();
        assert!(r > 1e5);
        assert!((r / 3.0e5 - 1.0).abs() < 0.01);
        assert_eq!(entropy_ratio(&web, &web).unwrap(), 1.0);
        let a = ComplexityProfile::from_sizes(4.0, 16.0);
        let b = ComplexityProfile::from_sizes(2.0, 4.0);
        assert!((entropy_ratio(&a, &b).unwrap() - 4.0).abs() < 1e-12);
        let flat = ComplexityProfile::from_sizes(3.0, 3.0);
        assert!(matches!(entropy_ratio(&a, &flat), Err(Error::DivisionByZero(_))));
    }
}
