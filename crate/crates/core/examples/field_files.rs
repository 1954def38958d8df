//! Write a density snapshot and a matrix measure to the binary field format
//! and read them back.

use rheoflow::harness::commands::defect_measures;
use rheoflow::harness::{read_field, write_field, FieldData};
use rheoflow::DensityField;

fn main() -> rheoflow::Result<()> {
    let dir = std::env::temp_dir().join("rheoflow-field-example");
    std::fs::create_dir_all(&dir)?;

    let rho = DensityField::from_fn(8, 0.5, 2.0, |x| 1.0 + 0.5 * x[0] * (1.0 - x[0]))?;
    let path = dir.join("rho.bin");
    write_field(&path, &FieldData::from(&rho))?;
    let back = read_field(&path)?;
    let (dims, components) = (back.dims, back.components);
    let same = back.into_density(0.5, 2.0)? == rho;
    println!(
        "{}: dims {dims:?}, {components} component(s), identical: {same}",
        path.display()
    );

    let (_, mu) = defect_measures(&[8], [0.0, 1.0, 0.0], 2, false)?.remove(0);
    let path = dir.join("defect.bin");
    write_field(&path, &FieldData::from(&mu))?;
    let back = read_field(&path)?;
    let (dims, components) = (back.dims, back.components);
    let same = back.into_measure()? == mu;
    println!(
        "{}: dims {dims:?}, {components} components, identical: {same}",
        path.display()
    );
    Ok(())
}
