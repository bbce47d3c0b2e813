use crate::constants::Element;
use crate::tensor::{norm, sub, Vec3};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Layer stacking sequence of the multilayer crystal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Stacking {
    /// Boron above nitrogen and nitrogen above boron in adjacent layers.
    #[default]
    #[serde(rename = "AA'")]
    AAPrime,
}

/// Which site the defect replaces. The origin sits on the removed atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DefectSite {
    #[default]
    BoronVacancy,
}

/// Geometry of the hBN crystal around the vacancy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    /// In-plane lattice constant, Å.
    pub a: f64,
    /// Interlayer spacing, Å.
    pub c_interlayer: f64,
    #[serde(default)]
    pub stacking: Stacking,
    /// Bath cutoff measured from the vacancy, Å.
    pub radius: f64,
    #[serde(default)]
    pub defect_site: DefectSite,
}

impl Default for LatticeSpec {
    fn default() -> Self {
        LatticeSpec {
            a: 2.504,
            c_interlayer: 3.33,
            stacking: Stacking::AAPrime,
            radius: 20.0,
            defect_site: DefectSite::BoronVacancy,
        }
    }
}

/// One occupied lattice site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub position: Vec3,
    pub element: Element,
}

impl Site {
    pub fn describe(&self) -> String {
        format!(
            "{} ({:.3}, {:.3}, {:.3})",
            self.element.symbol(),
            self.position[0],
            self.position[1],
            self.position[2]
        )
    }
}

impl LatticeSpec {
    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = radius;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Validation(format!("lattice radius must be > 0, got {}", self.radius)));
        }
        if !(self.a > 0.0 && self.c_interlayer > 0.0) {
            return Err(Error::Validation("lattice constants must be positive".into()));
        }
        Ok(())
    }

    fn a1(&self) -> Vec3 {
        [self.a, 0.0, 0.0]
    }

    fn a2(&self) -> Vec3 {
        [0.5 * self.a, 0.5 * 3f64.sqrt() * self.a, 0.0]
    }

    /// In-plane offset between the boron and nitrogen sublattices; its
    /// length is the B–N bond a/√3.
    pub fn bond_offset(&self) -> Vec3 {
        [0.5 * self.a, 0.5 * self.a / 3f64.sqrt(), 0.0]
    }

    /// In-plane offset of `element` in layer `layer`.
    fn sublattice_offset(&self, element: Element, layer: i64) -> Vec3 {
        let shifted = match (element, layer.rem_euclid(2)) {
            (Element::B, 0) | (Element::N, 1) => false,
            _ => true,
        };
        if shifted {
            self.bond_offset()
        } else {
            [0.0; 3]
        }
    }

    /// All occupied sites within `radius` of the vacancy, the vacancy itself
    /// excluded. Ordering is deterministic (layer, lattice indices, element).
    pub fn sites(&self) -> Vec<Site> {
        let r = self.radius;
        let n_layers = (r / self.c_interlayer).floor() as i64;
        let n_max = (2.0 * r / self.a).ceil() as i64 + 2;
        let (a1, a2) = (self.a1(), self.a2());
        let mut sites = Vec::new();
        for layer in -n_layers..=n_layers {
            let z = layer as f64 * self.c_interlayer;
            for n1 in -n_max..=n_max {
                for n2 in -n_max..=n_max {
                    for element in [Element::B, Element::N] {
                        let o = self.sublattice_offset(element, layer);
                        let p = [
                            n1 as f64 * a1[0] + n2 as f64 * a2[0] + o[0],
                            n1 as f64 * a1[1] + n2 as f64 * a2[1] + o[1],
                            z,
                        ];
                        let d = norm(p);
                        if d > r || d < 1e-6 {
                            continue;
                        }
                        sites.push(Site { position: p, element });
                    }
                }
            }
        }
        sites
    }

    /// The closest lattice site to `p` (the vacancy included) and its distance.
    pub fn nearest_site(&self, p: Vec3) -> (Site, f64) {
        let layer = (p[2] / self.c_interlayer).round() as i64;
        let z = layer as f64 * self.c_interlayer;
        let (a1, a2) = (self.a1(), self.a2());
        let det = a1[0] * a2[1] - a1[1] * a2[0];
        let mut best: Option<(Site, f64)> = None;
        for element in [Element::B, Element::N] {
            let o = self.sublattice_offset(element, layer);
            let (x, y) = (p[0] - o[0], p[1] - o[1]);
            let f1 = (x * a2[1] - y * a2[0]) / det;
            let f2 = (a1[0] * y - a1[1] * x) / det;
            for d1 in -1..=1 {
                for d2 in -1..=1 {
                    let n1 = f1.round() + d1 as f64;
                    let n2 = f2.round() + d2 as f64;
                    let q = [n1 * a1[0] + n2 * a2[0] + o[0], n1 * a1[1] + n2 * a2[1] + o[1], z];
                    let dist = norm(sub(p, q));
                    if best.map_or(true, |(_, bd)| dist < bd) {
                        best = Some((Site { position: q, element }, dist));
                    }
                }
            }
        }
        best.expect("two sublattices searched")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_neighbors_are_three_nitrogens() {
        let l = LatticeSpec::default().with_radius(1.6);
        let sites = l.sites();
        assert_eq!(sites.len(), 3);
        assert!(sites.iter().all(|s| s.element == Element::N && s.position[2] == 0.0));
        for s in &sites {
            assert!((norm(s.position) - 2.504 / 3f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn aa_prime_puts_nitrogen_above_the_vacancy() {
        let l = LatticeSpec::default().with_radius(3.4);
        let above: Vec<_> = l
            .sites()
            .into_iter()
            .filter(|s| s.position[2] > 0.0 && s.position[0].abs() < 1e-9 && s.position[1].abs() < 1e-9)
            .collect();
        assert_eq!(above.len(), 1);
        assert_eq!(above[0].element, Element::N);
    }

    #[test]
    fn site_counts_scale_with_volume() {
        // ~0.1106 sites / Å^3 for the default constants
        let n13 = LatticeSpec::default().with_radius(13.0).sites().len();
        let n30 = LatticeSpec::default().with_radius(30.0).sites().len();
        assert!((800..=1200).contains(&n13), "{n13}");
        assert!((11_000..=14_000).contains(&n30), "{n30}");
    }

    #[test]
    fn nearest_site_round_trip() {
        let l = LatticeSpec::default().with_radius(8.0);
        for s in l.sites() {
            let jitter = [s.position[0] + 3e-4, s.position[1] - 2e-4, s.position[2] + 1e-4];
            let (n, d) = l.nearest_site(jitter);
            assert_eq!(n.element, s.element);
            assert!(d < 1e-3);
        }
    }
}
