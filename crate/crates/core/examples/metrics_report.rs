//! Case metrics and a cohort JSON-lines report.
//!
//! cargo run --example metrics_report

use anatomy_guide::metrics::{cohort_report_jsonl, seg_metrics, CaseMetrics};
use anatomy_guide::morphology::{dilate, erode, StructElem};
use anatomy_guide::phantom::{gen_phantom, PhantomSpec};
use anatomy_guide::{Dims, Mask, Spacing};

fn main() -> anatomy_guide::Result<()> {
    let spec = PhantomSpec {
        dims: Dims::new(16, 128, 128)?,
        spacing: Spacing::new(5.0, 0.78, 0.78)?,
        arc_radius_mm: 25.0,
        tube_radius_mm: 12.0,
        tumor_radius_mm: 8.0,
        ..PhantomSpec::default()
    };
    let gt = gen_phantom(&spec)?.tumor;
    let empty = Mask::filled(gt.dims(), gt.spacing(), false)?;
    let preds = [
        ("exact", gt.clone()),
        ("grown", dilate(&gt, StructElem::Face6, 2)),
        ("shrunk", erode(&gt, StructElem::Face6, 1)),
        ("missed", empty),
    ];
    let mut cases = Vec::new();
    for (id, pred) in preds {
        let report = seg_metrics(&gt, &pred, 4.0, 1000.0)?;
        cases.push(CaseMetrics {
            case_id: id.into(),
            report,
        });
    }
    print!("{}", cohort_report_jsonl(&cases)?);
    Ok(())
}
