//! Node-centered 2-D scalar fields on a uniform grid.

/// What a [`ScalarField2D`] holds; determines the unit label on exports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Potential,
    FieldMagnitude,
    Conductivity,
    Concentration,
}

impl Quantity {
    pub fn units(self) -> &'static str {
        match self {
            Quantity::Potential => "V",
            Quantity::FieldMagnitude => "V/mm",
            Quantity::Conductivity => "S/m",
            Quantity::Concentration => "a.u.",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Quantity::Potential => "potential",
            Quantity::FieldMagnitude => "field_magnitude",
            Quantity::Conductivity => "conductivity",
            Quantity::Concentration => "concentration",
        }
    }
}

/// One scalar quantity sampled at the nodes x_i = i*dx, y_j = j*dy.
///
/// Values are stored row-major: index `j*nx + i` with `i` along x.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField2D {
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    quantity: Quantity,
    values: Vec<f64>,
}

impl ScalarField2D {
    pub fn zeros(nx: usize, ny: usize, dx: f64, dy: f64, quantity: Quantity) -> Self {
        assert!(nx >= 2 && ny >= 2, "grid needs at least 2x2 nodes");
        Self {
            nx,
            ny,
            dx,
            dy,
            quantity,
            values: vec![0.0; nx * ny],
        }
    }

    /// Builds a field by evaluating `f(x, y)` at every node.
    pub fn from_fn(
        nx: usize,
        ny: usize,
        dx: f64,
        dy: f64,
        quantity: Quantity,
        mut f: impl FnMut(f64, f64) -> f64,
    ) -> Self {
        let mut field = Self::zeros(nx, ny, dx, dy, quantity);
        for j in 0..ny {
            let y = j as f64 * dy;
            for i in 0..nx {
                field.values[j * nx + i] = f(i as f64 * dx, y);
            }
        }
        field
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }

    pub fn quantity(&self) -> Quantity {
        self.quantity
    }

    pub fn set_quantity(&mut self, quantity: Quantity) {
        self.quantity = quantity;
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.values[k] = v;
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.dy
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.nx..(j + 1) * self.nx]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Trapezoidal integral over the domain: boundary nodes weigh 1/2,
    /// corners 1/4. This is the discrete quantity the reflecting FTCS
    /// stencil conserves exactly, so every mass ledger entry uses it.
    pub fn trapz_integral(&self) -> f64 {
        let mut total = 0.0;
        for j in 0..self.ny {
            let row = self.row(j);
            let mut s = 0.5 * (row[0] + row[self.nx - 1]);
            for &v in &row[1..self.nx - 1] {
                s += v;
            }
            let wy = if j == 0 || j == self.ny - 1 { 0.5 } else { 1.0 };
            total += wy * s;
        }
        total * self.dx * self.dy
    }

    /// Largest |f(x,y) - f(x,L-y)| over all nodes; zero for a field
    /// symmetric about the horizontal midline.
    pub fn max_mirror_y_asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for j in 0..self.ny / 2 {
            let top = self.ny - 1 - j;
            for i in 0..self.nx {
                worst = worst.max((self.at(i, j) - self.at(i, top)).abs());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn from_fn_uses_node_coordinates() {
        let f = ScalarField2D::from_fn(3, 4, 0.5, 0.25, Quantity::Potential, |x, y| x + 10.0 * y);
        assert_eq!(f.at(2, 0), 1.0);
        assert_eq!(f.at(0, 3), 7.5);
        assert_eq!(f.at(1, 2), 0.5 + 5.0);
    }

    #[test]
    fn trapz_matches_analytic_for_linear_field() {
        // integral of (x + y) over [0,1]^2 is 1.
        let f = ScalarField2D::from_fn(101, 101, 0.01, 0.01, Quantity::Concentration, |x, y| x + y);
        assert_relative_eq!(f.trapz_integral(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn trapz_of_constant_is_area() {
        let f = ScalarField2D::from_fn(11, 21, 0.1, 0.05, Quantity::Concentration, |_, _| 3.0);
        assert_relative_eq!(f.trapz_integral(), 3.0, max_relative = 1e-13);
    }

    #[test]
    fn mirror_asymmetry_detects_skew() {
        let sym = ScalarField2D::from_fn(5, 5, 1.0, 1.0, Quantity::Concentration, |_, y| {
            (y - 2.0).abs()
        });
        assert_eq!(sym.max_mirror_y_asymmetry(), 0.0);
        let skew = ScalarField2D::from_fn(5, 5, 1.0, 1.0, Quantity::Concentration, |_, y| y);
        assert_eq!(skew.max_mirror_y_asymmetry(), 4.0);
    }
}
