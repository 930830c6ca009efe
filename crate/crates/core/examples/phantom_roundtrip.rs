//! Writes a phantom as NIfTI-1 and raw+JSON, reads both back.
//!
//! cargo run --example phantom_roundtrip -- [out_dir]

use anatomy_guide::io::{read_volume, save, Datatype};
use anatomy_guide::phantom::{gen_phantom, PhantomSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| std::env::temp_dir().join("phantom").display().to_string());
    std::fs::create_dir_all(&dir)?;
    let dir = std::path::Path::new(&dir);
    let p = gen_phantom(&PhantomSpec::default())?;

    save(&p.ct, Datatype::Float32, dir.join("ct.nii"))?;
    save(&p.labels, Datatype::Int16, dir.join("labels.nii"))?;
    save(&p.tumor, Datatype::Uint8, dir.join("tumor.raw"))?;

    let (ct, meta) = read_volume(dir.join("ct.nii"))?;
    println!(
        "ct.nii     {:?} spacing {:?} {:?} identical={}",
        meta.dims.as_array(),
        meta.spacing.as_array(),
        meta.datatype,
        ct == p.ct
    );
    let (labels, meta) = read_volume(dir.join("labels.nii"))?;
    println!(
        "labels.nii {:?} identical={}",
        meta.datatype,
        labels.to_labels()? == p.labels
    );
    let (tumor, meta) = read_volume(dir.join("tumor.json"))?;
    println!(
        "tumor.raw  {:?} {:?} identical={}",
        meta.source_format,
        meta.datatype,
        tumor.to_mask() == p.tumor
    );
    println!("written to {}", dir.display());
    Ok(())
}
