//! CSV metric logs.

use serde::Serialize;

use crate::error::{Error, Result};

/// One header row plus one row per record.
pub fn to_csv<T: Serialize>(records: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Malformed(format!("csv flush failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inq::StepMetrics;

    #[test]
    fn step_rows() {
        let rows = [StepMetrics {
            step: 1,
            sigma: 0.5,
            frozen_fraction: 0.5,
            train_loss: 0.25,
            eval_top1: 0.9,
            eval_top5: None,
        }];
        assert_eq!(
            to_csv(&rows).unwrap(),
            "step,sigma,frozen_fraction,train_loss,eval_top1,eval_top5\n1,0.5,0.5,0.25,0.9,\n"
        );
    }
}
