"""Thin wrappers around scipy.fft so worker count is set in one place."""

import os

from scipy import fft as _sfft

WORKERS = max(1, os.cpu_count() or 1)


def fftn(a):
    return _sfft.fftn(a, workers=WORKERS)


def ifftn(a):
    return _sfft.ifftn(a, workers=WORKERS)


def rfftn(a, s=None):
    return _sfft.rfftn(a, s=s, workers=WORKERS)


def irfftn(a, s=None):
    return _sfft.irfftn(a, s=s, workers=WORKERS)
