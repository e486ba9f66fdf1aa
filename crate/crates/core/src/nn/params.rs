use super::tensor::{TensorError, TensorTable};

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Visits every learnable tensor in a fixed order. Gradient containers use
/// the same types as the parameters they mirror.
pub trait Parameters {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64]));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, _, d| n += d.len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit("", &mut |_, _, d| out.extend_from_slice(d));
        out
    }

    fn assign_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        self.visit_mut("", &mut |_, _, d| {
            d.copy_from_slice(&flat[off..off + d.len()]);
            off += d.len();
        });
        assert_eq!(off, flat.len(), "flat parameter length mismatch");
    }

    fn fill(&mut self, value: f64) {
        self.visit_mut("", &mut |_, _, d| d.fill(value));
    }

    fn zeroed(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit("", &mut |_, _, d| ok &= d.iter().all(|x| x.is_finite()));
        ok
    }

    fn to_table(&self) -> TensorTable {
        let mut t = TensorTable::default();
        self.visit("", &mut |name, shape, d| t.push(name, shape, d));
        t
    }

    /// Loads values by name; every tensor must be present with its shape.
    fn load_table(&mut self, table: &TensorTable) -> Result<(), TensorError> {
        let mut err = None;
        let mut seen = 0;
        self.visit_mut("", &mut |name, shape, d| {
            if err.is_some() {
                return;
            }
            match table.get(name) {
                None => err = Some(TensorError::Missing(name.to_string())),
                Some(t) if t.shape != shape => {
                    err = Some(TensorError::ShapeMismatch {
                        name: name.to_string(),
                        expected: shape.to_vec(),
                        found: t.shape.clone(),
                    })
                }
                Some(t) => {
                    d.copy_from_slice(&t.data);
                    seen += 1;
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if seen != table.tensors.len() {
            let mut names = Vec::new();
            self.visit("", &mut |n, _, _| names.push(n.to_string()));
            if let Some(extra) = table.tensors.iter().find(|t| !names.contains(&t.name)) {
                return Err(TensorError::Unexpected(extra.name.clone()));
            }
        }
        Ok(())
    }
}
