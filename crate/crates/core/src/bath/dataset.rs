use super::lattice::{LatticeSpec, Site};
use crate::constants::{Element, Isotope};
use crate::tensor::{norm, sub, Tensor3, Vec3};
use crate::{Error, Result};
use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

pub const CSV_HEADER: [&str; 13] = [
    "x_ang", "y_ang", "z_ang", "element", "Axx", "Axy", "Axz", "Ayx", "Ayy", "Ayz", "Azx", "Azy", "Azz",
];

/// Position tolerance for matching dataset entries to lattice sites, Å.
pub const SITE_TOLERANCE: f64 = 1e-3;

/// Relative tolerance under which in-plane S_z–I_⊥ couplings count as zero.
pub const IN_PLANE_ZERO_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperfineEntry {
    pub position: Vec3,
    pub element: Element,
    pub tensor: Tensor3,
}

/// Hyperfine tensors per lattice site, computed for one reference isotope
/// per element.
#[derive(Debug, Clone)]
pub struct HyperfineDataset {
    entries: Vec<HyperfineEntry>,
    boron_reference: Isotope,
    nitrogen_reference: Isotope,
    index: HashMap<(Element, [i64; 3]), Vec<usize>>,
    frame_shift: Vec3,
}

fn key(p: Vec3) -> [i64; 3] {
    [
        (p[0] / SITE_TOLERANCE).round() as i64,
        (p[1] / SITE_TOLERANCE).round() as i64,
        (p[2] / SITE_TOLERANCE).round() as i64,
    ]
}

impl HyperfineDataset {
    /// Builds a dataset from entries already expressed in the defect frame.
    pub fn new(entries: Vec<HyperfineEntry>, boron_reference: Isotope, nitrogen_reference: Isotope) -> Result<Self> {
        if boron_reference.element() != Element::B || nitrogen_reference.element() != Element::N {
            return Err(Error::Validation(format!(
                "reference isotopes must be one boron and one nitrogen isotope, got {boron_reference} / {nitrogen_reference}"
            )));
        }
        for e in &entries {
            if e.position.iter().chain(e.tensor.0.iter().flatten()).any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "non-finite hyperfine entry at {:?}",
                    e.position
                )));
            }
        }
        let mut ds = HyperfineDataset {
            entries,
            boron_reference,
            nitrogen_reference,
            index: HashMap::new(),
            frame_shift: [0.0; 3],
        };
        ds.reindex();
        Ok(ds)
    }

    fn reindex(&mut self) {
        self.index.clear();
        for (i, e) in self.entries.iter().enumerate() {
            self.index.entry((e.element, key(e.position))).or_default().push(i);
        }
    }

    pub fn entries(&self) -> &[HyperfineEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn reference(&self, element: Element) -> Isotope {
        match element {
            Element::B => self.boron_reference,
            Element::N => self.nitrogen_reference,
        }
    }

    /// Translation that was applied on ingestion to put the vacancy at the
    /// origin, Å.
    pub fn frame_shift(&self) -> Vec3 {
        self.frame_shift
    }

    /// Entry for `site`, matched within [`SITE_TOLERANCE`].
    pub fn lookup(&self, site: &Site) -> Option<&HyperfineEntry> {
        let k = key(site.position);
        let mut best: Option<(&HyperfineEntry, f64)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let kk = [k[0] + dx, k[1] + dy, k[2] + dz];
                    let Some(list) = self.index.get(&(site.element, kk)) else { continue };
                    for &i in list {
                        let e = &self.entries[i];
                        let d = norm(sub(e.position, site.position));
                        if d <= SITE_TOLERANCE && best.map_or(true, |(_, bd)| d < bd) {
                            best = Some((e, d));
                        }
                    }
                }
            }
        }
        best.map(|(e, _)| e)
    }

    /// Sites of `lattice` without a dataset entry.
    pub fn missing_sites(&self, lattice: &LatticeSpec) -> Vec<Site> {
        lattice.sites().into_iter().filter(|s| self.lookup(s).is_none()).collect()
    }

    /// Entries whose position is further than [`SITE_TOLERANCE`] from any
    /// site of `lattice` (or sit on a site of the other element).
    pub fn off_lattice_entries(&self, lattice: &LatticeSpec) -> Vec<HyperfineEntry> {
        self.entries
            .iter()
            .filter(|e| {
                let (site, d) = lattice.nearest_site(e.position);
                d > SITE_TOLERANCE || site.element != e.element
            })
            .copied()
            .collect()
    }

    /// Reads the CSV format
    /// `x_ang,y_ang,z_ang,element,Axx,Axy,Axz,Ayx,Ayy,Ayz,Azx,Azy,Azz` and
    /// moves the vacancy to the origin, see [`HyperfineDataset::locate_defect`].
    pub fn from_csv_reader<R: Read>(reader: R, boron_reference: Isotope, nitrogen_reference: Isotope) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != CSV_HEADER {
            return Err(Error::Validation(format!(
                "hyperfine CSV header must be `{}`, got `{}`",
                CSV_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut entries = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i].parse::<f64>().map_err(|_| {
                    Error::Validation(format!("row {}: column {} is not a number: {:?}", line + 2, CSV_HEADER[i], &rec[i]))
                })
            };
            let element = Element::parse(&rec[3])
                .ok_or_else(|| Error::Validation(format!("row {}: unknown element {:?}", line + 2, &rec[3])))?;
            let mut t = [0.0; 9];
            for (k, v) in t.iter_mut().enumerate() {
                *v = num(4 + k)?;
            }
            entries.push(HyperfineEntry {
                position: [num(0)?, num(1)?, num(2)?],
                element,
                tensor: Tensor3::from_row_major(t),
            });
        }
        let mut ds = HyperfineDataset::new(entries, boron_reference, nitrogen_reference)?;
        let shift = ds.locate_defect()?;
        ds.translate(shift);
        Ok(ds)
    }

    pub fn from_csv(path: &Path, boron_reference: Isotope, nitrogen_reference: Isotope) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(std::io::BufReader::new(f), boron_reference, nitrogen_reference)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for e in &self.entries {
            let mut rec = vec![
                format!("{:.6}", e.position[0]),
                format!("{:.6}", e.position[1]),
                format!("{:.6}", e.position[2]),
                e.element.symbol().to_string(),
            ];
            rec.extend(e.tensor.to_row_major().iter().map(|v| format!("{v:.9e}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Finds the translation that moves the vacancy to the origin.
    ///
    /// The layer of the defect is the one whose entries have vanishing
    /// A_xz, A_yz, A_zx, A_zy (mirror symmetry of the defect plane); among
    /// such layers the one holding the strongest coupling wins. In-plane, the
    /// vacancy is the centroid of the three strongest nitrogen entries of
    /// that layer.
    pub fn locate_defect(&self) -> Result<Vec3> {
        if self.entries.is_empty() {
            return Ok([0.0; 3]);
        }
        let mut layers: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            layers.entry((e.position[2] * 100.0).round() as i64).or_default().push(i);
        }
        let mut candidate: Option<(i64, f64)> = None;
        for (z, idx) in &layers {
            let in_plane_zero = idx.iter().all(|&i| {
                let t = &self.entries[i].tensor;
                let scale = t.frobenius().max(1e-12);
                [t[(0, 2)], t[(1, 2)], t[(2, 0)], t[(2, 1)]].iter().all(|v| v.abs() <= IN_PLANE_ZERO_TOLERANCE * scale)
            });
            if !in_plane_zero {
                continue;
            }
            let strongest = idx.iter().map(|&i| self.entries[i].tensor.frobenius()).fold(0.0, f64::max);
            if candidate.map_or(true, |(_, s)| strongest > s) {
                candidate = Some((*z, strongest));
            }
        }
        let (zkey, _) = candidate.ok_or_else(|| {
            Error::Validation("no layer satisfies the in-plane symmetry of the defect plane".into())
        })?;
        let layer = &layers[&zkey];
        let z0 = layer.iter().map(|&i| self.entries[i].position[2]).sum::<f64>() / layer.len() as f64;
        let mut nitrogens: Vec<&HyperfineEntry> =
            layer.iter().map(|&i| &self.entries[i]).filter(|e| e.element == Element::N).collect();
        nitrogens.sort_by(|a, b| b.tensor.frobenius().total_cmp(&a.tensor.frobenius()));
        if nitrogens.len() < 3 {
            return Err(Error::Validation("defect layer holds fewer than three nitrogen entries".into()));
        }
        let c = nitrogens[..3].iter().fold([0.0; 3], |acc, e| {
            [acc[0] + e.position[0] / 3.0, acc[1] + e.position[1] / 3.0, 0.0]
        });
        Ok([-c[0], -c[1], -z0])
    }

    fn translate(&mut self, shift: Vec3) {
        if shift == [0.0; 3] {
            return;
        }
        for e in &mut self.entries {
            for k in 0..3 {
                e.position[k] += shift[k];
            }
        }
        for k in 0..3 {
            self.frame_shift[k] += shift[k];
        }
        self.reindex();
    }

    /// Entries of the defect layer that violate the in-plane zero pattern.
    pub fn in_plane_violations(&self) -> Vec<HyperfineEntry> {
        self.entries
            .iter()
            .filter(|e| e.position[2].abs() < 0.1)
            .filter(|e| {
                let t = &e.tensor;
                let scale = t.frobenius().max(1e-12);
                [t[(0, 2)], t[(1, 2)], t[(2, 0)], t[(2, 1)]].iter().any(|v| v.abs() > IN_PLANE_ZERO_TOLERANCE * scale)
            })
            .copied()
            .collect()
    }
}
