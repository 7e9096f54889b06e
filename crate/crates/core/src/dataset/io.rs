//! CSV feature tables (`<features...>,label`) and JSON schema files.

use std::io::{Read, Write};

use super::{Dataset, FeatureSchema, Label};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Reads a feature table whose last column is `label` (`lawful|unlawful`).
/// Without a schema every column is numeric; with one, header names must
/// match it exactly.
pub fn read_dataset_csv<R: Read>(reader: R, schema: Option<&FeatureSchema>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let ncols = header.len();
    if ncols < 2 || &header[ncols - 1] != "label" {
        return Err(Error::Config("feature CSV must end with a `label` column".into()));
    }
    let names: Vec<&str> = header.iter().take(ncols - 1).collect();
    let schema = match schema {
        Some(s) => {
            if s.names() != names {
                return Err(Error::Config("CSV header does not match the feature schema".into()));
            }
            s.clone()
        }
        None => FeatureSchema::numeric(&names)?,
    };

    let mut data = Vec::new();
    let mut y = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (col, field) in rec.iter().take(ncols - 1).enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::NonFiniteInput { row, col })?;
            data.push(v);
        }
        y.push(rec[ncols - 1].parse::<Label>()?);
    }
    let x = Matrix::from_vec(y.len(), ncols - 1, data)?;
    Dataset::new(x, y, schema)
}

pub fn write_dataset_csv<W: Write>(writer: W, d: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = d.schema.names();
    header.push("label".into());
    w.write_record(&header)?;
    let mut rec = Vec::with_capacity(header.len());
    for (row, label) in d.x.iter_rows().zip(&d.y) {
        rec.clear();
        rec.extend(row.iter().map(|v| v.to_string()));
        rec.push(label.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_schema_json<R: Read>(reader: R) -> Result<FeatureSchema> {
    let schema: FeatureSchema = serde_json::from_reader(reader)?;
    FeatureSchema::new(schema.features().to_vec())
}

pub fn write_schema_json<W: Write>(writer: W, schema: &FeatureSchema) -> Result<()> {
    serde_json::to_writer_pretty(writer, schema)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let text = "a,b,label\n1.5,-2,lawful\n0,3e2,unlawful\n";
        let d = read_dataset_csv(text.as_bytes(), None).unwrap();
        assert_eq!(d.n_rows(), 2);
        assert_eq!(d.x[(1, 1)], 300.0);
        assert_eq!(d.y, vec![Label::Lawful, Label::Unlawful]);
        let mut out = Vec::new();
        write_dataset_csv(&mut out, &d).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "a,b,label\n1.5,-2,lawful\n0,300,unlawful\n");
    }

    #[test]
    fn csv_errors() {
        assert!(read_dataset_csv("a,b\n1,2\n".as_bytes(), None).is_err());
        assert!(matches!(
            read_dataset_csv("a,label\nx,lawful\n".as_bytes(), None),
            Err(Error::NonFiniteInput { .. })
        ));
        assert!(matches!(
            read_dataset_csv("a,label\n1,maybe\n".as_bytes(), None),
            Err(Error::UnknownCategory(_))
        ));
    }

    #[test]
    fn schema_json_round_trip() {
        let s = crate::dataset::feature_catalog();
        let mut buf = Vec::new();
        write_schema_json(&mut buf, &s).unwrap();
        assert_eq!(read_schema_json(buf.as_slice()).unwrap(), s);
    }
}
