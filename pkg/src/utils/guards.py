# -*- coding: utf-8 -*-
"""
Argument checks shared by the simulation, navigation and analytics code
"""

import math

import numpy as np


def check_finite(value, name="value"):
    """Raise ValueError unless value (scalar or array) is finite everywhere"""
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f'{name} must be finite, got {value!r}')
    return value


def check_positive(value, name="value", allow_zero=False):
    check_finite(value, name)
    if value < 0 or (value == 0 and not allow_zero):
        bound = '>= 0' if allow_zero else '> 0'
        raise ValueError(f'{name} must be {bound}, got {value!r}')
    return value


def check_range(value, low, high, name="value", low_open=False, high_open=False):
    """Check low <= value <= high (ends optionally open)"""
    check_finite(value, name)
    below = value <= low if low_open else value < low
    above = value >= high if high_open else value > high
    if below or above:
        left = '(' if low_open else '['
        right = ')' if high_open else ']'
        raise ValueError(f'{name} must be in {left}{low}, {high}{right}, got {value!r}')
    return value


def check_probability(value, name="probability"):
    """Rates in [0, 1)"""
    return check_range(value, 0.0, 1.0, name, high_open=True)


def wrap_angle(angle):
    """Normalize to (-pi, pi]; in-range values are returned untouched"""
    angle = float(angle)
    if -math.pi < angle <= math.pi:
        return angle
    a = math.fmod(angle + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


def wrap_angles(angles):
    """Vectorized wrap_angle"""
    angles = np.asarray(angles, dtype=float)
    a = np.fmod(angles + np.pi, 2.0 * np.pi)
    a = np.where(a <= 0.0, a + 2.0 * np.pi, a) - np.pi
    inside = (angles > -np.pi) & (angles <= np.pi)
    return np.where(inside, angles, a)
