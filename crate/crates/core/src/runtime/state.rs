//! State-vector storage: one dense padded array per grid-function
//! component, plus right-hand-side slots and integrator scratch.

use indexmap::IndexMap;

use crate::compile::CompiledProgram;
use crate::frontend::ast::GroupRole;
use crate::runtime::{RuntimeError, UniformGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldRole {
    Evolved,
    Extra,
    /// `dt_<component>` buffer the RHS kernels write into.
    RhsSlot,
    /// Integrator-internal buffers.
    Scratch,
}

#[derive(Debug, Clone)]
pub struct Field {
    pub role: FieldRole,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StateVector {
    fields: IndexMap<String, Field>,
    len: usize,
}

impl StateVector {
    /// Allocate every component a program needs on `grid`, zero-filled:
    /// evolved and extra components in declaration order, then one
    /// `dt_<component>` slot per evolved component.
    pub fn for_program(compiled: &CompiledProgram, grid: &UniformGrid) -> StateVector {
        let len = grid.total_padded();
        let mut fields = IndexMap::new();
        for (component, role) in compiled.field_components() {
            let role = match role {
                GroupRole::Evolved => FieldRole::Evolved,
                GroupRole::Extra => FieldRole::Extra,
            };
            fields.insert(
                component,
                Field {
                    role,
                    data: vec![0.0; len],
                },
            );
        }
        let evolved: Vec<String> = fields
            .iter()
            .filter(|(_, f)| f.role == FieldRole::Evolved)
            .map(|(name, _)| name.clone())
            .collect();
        for name in evolved {
            fields.insert(
                format!("dt_{name}"),
                Field {
                    role: FieldRole::RhsSlot,
                    data: vec![0.0; len],
                },
            );
        }
        StateVector { fields, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.fields.keys()
    }

    /// Component names with a given role, insertion order.
    pub fn names_with_role(&self, role: FieldRole) -> Vec<String> {
        self.fields
            .iter()
            .filter(|(_, f)| f.role == role)
            .map(|(n, _)| n.clone())
            .collect()
    }

    pub fn role(&self, name: &str) -> Option<FieldRole> {
        self.fields.get(name).map(|f| f.role)
    }

    pub fn data(&self, name: &str) -> Result<&[f64], RuntimeError> {
        self.fields
            .get(name)
            .map(|f| f.data.as_slice())
            .ok_or_else(|| RuntimeError::UnknownFunction(name.to_string()))
    }

    pub fn data_mut(&mut self, name: &str) -> Result<&mut [f64], RuntimeError> {
        self.fields
            .get_mut(name)
            .map(|f| f.data.as_mut_slice())
            .ok_or_else(|| RuntimeError::UnknownFunction(name.to_string()))
    }

    /// Create (or reuse) an integrator scratch buffer.
    pub fn ensure_scratch(&mut self, name: &str) {
        if !self.fields.contains_key(name) {
            self.fields.insert(
                name.to_string(),
                Field {
                    role: FieldRole::Scratch,
                    data: vec![0.0; self.len],
                },
            );
        }
    }

    /// Raw pointer to a field's storage, for tiled sweeps. The caller is
    /// responsible for aliasing discipline (kernels never read what they
    /// write, and tiles are disjoint).
    pub(crate) fn raw(&mut self, name: &str) -> Result<*mut f64, RuntimeError> {
        self.fields
            .get_mut(name)
            .map(|f| f.data.as_mut_ptr())
            .ok_or_else(|| RuntimeError::UnknownFunction(name.to_string()))
    }

    /// Copy `src` into `dst` (whole padded array).
    pub fn copy_field(&mut self, src: &str, dst: &str) -> Result<(), RuntimeError> {
        let src_data = self.data(src)?.to_vec();
        self.data_mut(dst)?.copy_from_slice(&src_data);
        Ok(())
    }

    /// `dst = a + scale * b` over the whole padded arrays. `dst` may equal
    /// `a` (the accumulate form); `b` must be a distinct field.
    pub fn axpy(&mut self, dst: &str, a: &str, scale: f64, b: &str) -> Result<(), RuntimeError> {
        debug_assert_ne!(dst, b);
        if dst == a {
            let b_data = self.data(b)?.to_vec();
            for (d, bv) in self.data_mut(dst)?.iter_mut().zip(&b_data) {
                *d += scale * bv;
            }
        } else {
            let a_data = self.data(a)?.to_vec();
            let b_data = self.data(b)?.to_vec();
            let dst_data = self.data_mut(dst)?;
            for ((d, av), bv) in dst_data.iter_mut().zip(&a_data).zip(&b_data) {
                *d = av + scale * bv;
            }
        }
        Ok(())
    }
}
