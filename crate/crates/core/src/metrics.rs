//! Per-class pixel IoU and the spatial-consistency report.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ClassId, ClassRaster};

fn check_pair(a: &ClassRaster, b: &ClassRaster) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::structural(format!(
            "raster dimensions differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    if !a.same_registry(b) {
        return Err(Error::structural("rasters use different class registries"));
    }
    Ok(())
}

/// Intersection-over-union of the pixel sets labelled `class` in `a` and `b`.
/// `None` when neither raster contains the class.
pub fn class_iou(a: &ClassRaster, b: &ClassRaster, class: ClassId) -> Result<Option<f64>> {
    check_pair(a, b)?;
    let (inter, union) = a
        .data()
        .iter()
        .zip(b.data())
        .fold((0u64, 0u64), |(i, u), (&pa, &pb)| {
            let (ia, ib) = (pa == class, pb == class);
            (i + (ia && ib) as u64, u + (ia || ib) as u64)
        });
    Ok((union > 0).then(|| inter as f64 / union as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub name: String,
    /// `None` marks a class absent from both rasters.
    pub iou: Option<f64>,
}

/// Per-class IoU in evaluation order plus their unweighted mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub per_class: Vec<ClassScore>,
    pub average: f64,
}

impl ConsistencyReport {
    /// Assembles a report from already computed per-class values. The average
    /// skips absent classes; all-absent input is an error.
    pub fn from_scores(per_class: Vec<ClassScore>) -> Result<Self> {
        let present: Vec<f64> = per_class.iter().filter_map(|s| s.iou).collect();
        if present.is_empty() {
            return Err(Error::EmptyReport);
        }
        let average = present.iter().sum::<f64>() / present.len() as f64;
        Ok(Self { per_class, average })
    }

    pub fn get(&self, name: &str) -> Option<Option<f64>> {
        self.per_class.iter().find(|s| s.name == name).map(|s| s.iou)
    }
}

/// Spatial consistency between a generated panorama's class raster and the
/// reference raster derived from the layout input.
pub fn spatial_consistency(pred: &ClassRaster, reference: &ClassRaster, classes: &[ClassId]) -> Result<ConsistencyReport> {
    check_pair(pred, reference)?;
    if classes.is_empty() {
        return Err(Error::invalid("class list is empty"));
    }
    let registry = pred.registry();
    let per_class = classes
        .iter()
        .map(|&c| {
            let name = registry
                .name_of(c)
                .ok_or_else(|| Error::invalid(format!("class id {c} is not in the registry")))?
                .to_string();
            Ok(ClassScore {
                name,
                iou: class_iou(pred, reference, c)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ConsistencyReport::from_scores(per_class)
}

/// Reward channel for reward-driven fine-tuning: the consistency average.
pub fn structural_fidelity_reward(pred: &ClassRaster, reference: &ClassRaster, classes: &[ClassId]) -> Result<f64> {
    Ok(spatial_consistency(pred, reference, classes)?.average)
}

/// Writes the CSV header `label,<classes...>,Average`.
pub fn write_csv_header<W: Write>(out: &mut csv::Writer<W>, class_names: &[impl AsRef<str>]) -> Result<()> {
    let mut row = vec!["label".to_string()];
    row.extend(class_names.iter().map(|c| c.as_ref().to_string()));
    row.push("Average".into());
    out.write_record(&row)?;
    Ok(())
}

/// Appends one report row; absent classes are written as `ABSENT`.
pub fn write_csv_row<W: Write>(out: &mut csv::Writer<W>, label: &str, report: &ConsistencyReport) -> Result<()> {
    let mut row = vec![label.to_string()];
    row.extend(report.per_class.iter().map(|s| match s.iou {
        Some(v) => format!("{v:.4}"),
        None => "ABSENT".into(),
    }));
    row.push(format!("{:.4}", report.average));
    out.write_record(&row)?;
    Ok(())
}
