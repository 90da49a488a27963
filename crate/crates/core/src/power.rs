//! Duty-cycled power budget of the receiving node and the resulting battery life.
//!
//! Currents are in microamperes, powers in nanowatts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Supply voltage that reproduces the published component powers.
pub const REFERENCE_SUPPLY_V: f64 = 3.6;
/// One wake-up of 1 ms every second.
pub const REFERENCE_ACTIVE_S: f64 = 1e-3;
pub const REFERENCE_PERIOD_S: f64 = 1.0;
/// CR2032 coin cell.
pub const CR2032_CAPACITY_MAH: f64 = 225.0;
pub const CR2032_SHELF_LIFE_Y: f64 = 8.5;
pub const HOURS_PER_YEAR: f64 = 8766.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentBudget<T> {
    pub name: String,
    pub active_current_ua: T,
    pub passive_current_ua: T,
}

impl<T: Scalar> ComponentBudget<T> {
    pub fn new(name: impl Into<String>, active_current_ua: T, passive_current_ua: T) -> Self {
        Self { name: name.into(), active_current_ua, passive_current_ua }
    }
}

/// Measured front-end and ADC currents of the reference receiver.
pub fn reference_node<T: Scalar>() -> Vec<ComponentBudget<T>> {
    vec![
        ComponentBudget::new("LDO + MEMS", T::lit(113.1), T::lit(0.03)),
        ComponentBudget::new("OPAMP 1", T::lit(81.5), T::zero()),
        ComponentBudget::new("OPAMP 2", T::lit(81.5), T::zero()),
        ComponentBudget::new("ADC", T::lit(300.0), T::lit(1.9)),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentPower<T> {
    pub name: String,
    pub active_nw: T,
    pub passive_nw: T,
    pub total_nw: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerBreakdown<T> {
    pub components: Vec<ComponentPower<T>>,
    pub active_nw: T,
    pub passive_nw: T,
    pub total_nw: T,
    pub duty_cycle: T,
    pub supply_voltage: T,
}

impl<T: Scalar> PowerBreakdown<T> {
    /// Average supply current in µA.
    pub fn mean_current_ua(&self) -> T {
        self.total_nw / (self.supply_voltage * T::lit(1000.0))
    }
}

/// Average power of each component when active for `active_time` out of every `period`.
pub fn duty_cycle_power<T: Scalar>(
    components: &[ComponentBudget<T>],
    supply_voltage: T,
    active_time: T,
    period: T,
) -> Result<PowerBreakdown<T>> {
    if !(supply_voltage > T::zero()) || !supply_voltage.is_finite() {
        return Err(Error::param("supply voltage must be positive"));
    }
    if !(active_time > T::zero() && active_time <= period) || !period.is_finite() {
        return Err(Error::param("duty cycle requires 0 < active_time <= period"));
    }
    let d = active_time / period;
    let nw = T::lit(1000.0) * supply_voltage;
    let mut rows = Vec::with_capacity(components.len());
    for c in components {
        if c.active_current_ua < T::zero() || c.passive_current_ua < T::zero() {
            return Err(Error::param(format!("negative current for {}", c.name)));
        }
        let active_nw = nw * c.active_current_ua * d;
        let passive_nw = nw * c.passive_current_ua * (T::one() - d);
        rows.push(ComponentPower { name: c.name.clone(), active_nw, passive_nw, total_nw: active_nw + passive_nw });
    }
    let active_nw: T = rows.iter().map(|r| r.active_nw).sum();
    let passive_nw: T = rows.iter().map(|r| r.passive_nw).sum();
    Ok(PowerBreakdown {
        components: rows,
        active_nw,
        passive_nw,
        total_nw: active_nw + passive_nw,
        duty_cycle: d,
        supply_voltage,
    })
}

/// Battery life in years ignoring self-discharge; infinite for zero load.
pub fn raw_battery_life<T: Scalar>(total_power_nw: T, capacity_mah: T, supply_voltage: T) -> T {
    if total_power_nw <= T::zero() {
        return T::infinity();
    }
    let current_ua = total_power_nw / (supply_voltage * T::lit(1000.0));
    capacity_mah * T::lit(1000.0) / current_ua / T::lit(HOURS_PER_YEAR)
}

/// Battery life in years, capped by the cell's shelf life.
pub fn battery_life<T: Scalar>(total_power_nw: T, capacity_mah: T, supply_voltage: T, shelf_life_y: T) -> T {
    raw_battery_life(total_power_nw, capacity_mah, supply_voltage).min(shelf_life_y)
}
