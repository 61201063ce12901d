//! CSV readers and writers for point sets and distance matrices.
//!
//! Point files have a header `f0,…,f{d−1}` with an optional trailing `label`
//! column. Matrix files have no header and one row per point.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::model::{DistMatrix, Geometry, Instance, PointSet};

fn parse_row(rec: &csv::StringRecord, line: usize) -> Result<Vec<f64>> {
    rec.iter()
        .enumerate()
        .map(|(c, s)| {
            s.trim().parse::<f64>().map_err(|_| {
                Error::Format(format!("line {line}, column {c}: {s:?} is not a number"))
            })
        })
        .collect()
}

fn reader(r: impl Read) -> csv::Reader<impl Read> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(r)
}

/// Points with optional integer labels.
pub fn read_points_csv(r: impl Read) -> Result<(PointSet, Option<Vec<i64>>)> {
    let mut rdr = reader(r);
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| Error::Format("empty points file".into()))??;
    let has_label = header.iter().next_back() == Some("label");
    let dim = header.len() - usize::from(has_label);
    if dim == 0 {
        return Err(Error::Format("points file has no feature columns".into()));
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != header.len() {
            return Err(Error::Format(format!(
                "line {line}: expected {} fields, found {}",
                header.len(),
                rec.len()
            )));
        }
        let row = parse_row(&rec, line)?;
        data.extend_from_slice(&row[..dim]);
        if has_label {
            let v = row[dim];
            if v.fract() != 0.0 {
                return Err(Error::Format(format!(
                    "line {line}: label {v} is not an integer"
                )));
            }
            labels.push(v as i64);
        }
    }
    if data.is_empty() {
        return Err(Error::Format("points file has no rows".into()));
    }
    Ok((PointSet::new(dim, data)?, has_label.then_some(labels)))
}

pub fn write_points_csv(w: impl Write, points: &PointSet, labels: Option<&[i64]>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (0..points.dim()).map(|j| format!("f{j}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    wtr.write_record(&header)?;
    for (i, row) in points.rows().enumerate() {
        let mut rec: Vec<String> = row.iter().map(f64::to_string).collect();
        if let Some(l) = labels {
            rec.push(l[i].to_string());
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_matrix_csv(r: impl Read) -> Result<DistMatrix> {
    let rows = reader(r)
        .records()
        .enumerate()
        .map(|(i, rec)| parse_row(&rec?, i + 1))
        .collect::<Result<Vec<_>>>()?;
    DistMatrix::from_rows(&rows)
}

pub fn write_matrix_csv(w: impl Write, m: &DistMatrix) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for row in m.as_slice().chunks(m.len()) {
        wtr.write_record(row.iter().map(f64::to_string))?;
    }
    wtr.flush()?;
    Ok(())
}

/// A headerless all-numeric first row means a matrix file; anything else is a points file.
pub fn read_instance_csv(mut r: impl Read) -> Result<Instance> {
    let mut buf = String::new();
    r.read_to_string(&mut buf)?;
    let first = buf.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let numeric = !first.is_empty() && first.split(',').all(|s| s.trim().parse::<f64>().is_ok());
    if numeric {
        Ok(Instance::from_matrix(read_matrix_csv(buf.as_bytes())?))
    } else {
        let (points, labels) = read_points_csv(buf.as_bytes())?;
        let inst = Instance::from_points(points)?;
        match labels {
            Some(l) => inst.with_labels(l),
            None => Ok(inst),
        }
    }
}

pub fn write_instance_csv(w: impl Write, inst: &Instance) -> Result<()> {
    match inst.geometry() {
        Geometry::Points(p) => write_points_csv(w, p, inst.labels()),
        Geometry::Matrix(m) => write_matrix_csv(w, m),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_round_trip_with_labels() {
        let p = PointSet::new(2, vec![0.5, -1.0, 2.0, 3.25]).unwrap();
        let mut buf = Vec::new();
        write_points_csv(&mut buf, &p, Some(&[3, -1])).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "f0,f1,label\n0.5,-1,3\n2,3.25,-1\n"
        );
        let (q, l) = read_points_csv(buf.as_slice()).unwrap();
        assert_eq!(q, p);
        assert_eq!(l, Some(vec![3, -1]));
    }

    #[test]
    fn unlabeled_points_and_matrices_are_detected() {
        let inst = read_instance_csv("f0\n1\n2\n".as_bytes()).unwrap();
        assert!(inst.points().is_some() && inst.labels().is_none());
        let inst = read_instance_csv("0,1\n1,0\n".as_bytes()).unwrap();
        assert_eq!(inst.dist(0, 1), 1.0);
        let mut buf = Vec::new();
        write_instance_csv(&mut buf, &inst).unwrap();
        assert_eq!(buf, b"0,1\n1,0\n");
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(read_points_csv("f0,label\n1,x\n".as_bytes()).is_err());
        assert!(read_points_csv("f0,label\n1,0.5\n".as_bytes()).is_err());
        assert!(read_points_csv("f0,f1\n1\n".as_bytes()).is_err());
        assert!(read_points_csv("f0\n".as_bytes()).is_err());
        assert!(read_matrix_csv("0,1\n2,0\n".as_bytes()).is_err());
    }
}
