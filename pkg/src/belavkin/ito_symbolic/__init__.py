"""Symbolic quantum stochastic calculus for the filter derivations."""

from .derive import (
    COUNTING,
    QUADRATURE,
    BelavkinEquation,
    Cocycle,
    GainDerivation,
    assemble_belavkin_equation,
    check_cocycle,
    cocycle,
    conditional_expectation,
    counting_gain_target,
    derive_filter_gain,
    innovation,
    laser_cocycle,
    lindblad_form,
    measurement,
    quadrature_gain_target,
    vacuum_dt_generator,
    vacuum_expectation,
)
from .evaluate import evaluate
from .expr import Atom, Expr, Increment, SysSymbol, dt, filtered, inc, number, observed, one, phase, scalar, sym
from .ito import ITO_TABLE, Factor, basic_increments, expand_product_differential, ito_product
from .render import render, render_equation

__all__ = [name for name in dir() if not name.startswith("_")]
