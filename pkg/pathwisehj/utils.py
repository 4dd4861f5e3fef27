# UTILS MODULE


#! IMPORTS


import json
import os
import time
import numpy as np


__all__ = [
    "PathwiseError",
    "ConfigError",
    "SolverRefusal",
    "IncrementTooSmall",
    "WindowTooLarge",
    "NotUniformlyConvexError",
    "DegenerateHamiltonianError",
    "InvariantViolation",
    "ConjugateRangeWarning",
    "FLOAT_FORMAT",
    "get_files",
    "get_time",
    "write_json",
    "read_json",
]


#! CONSTANTS


# 17 significant digits make every float round-trip through text exactly
FLOAT_FORMAT = "%.17g"


#! CLASSES


class PathwiseError(Exception):
    """
    base class of the errors raised by the package.
    """


class ConfigError(PathwiseError, ValueError):
    """
    the experiment configuration violates one of its invariants.
    """


class SolverRefusal(PathwiseError, RuntimeError):
    """
    a solution operator refuses to run with the given arguments.
    """


class IncrementTooSmall(SolverRefusal):
    """
    the time increment covers too few grid cells for a meaningful
    sup/inf-convolution.
    """


class WindowTooLarge(SolverRefusal):
    """
    the search window of a brute force operator exceeds half a period.
    """


class NotUniformlyConvexError(PathwiseError, ValueError):
    """
    the Hamiltonian is not uniformly convex on the requested slope range.
    """


class DegenerateHamiltonianError(PathwiseError, ValueError):
    """
    a curvature quantity has been requested for a Hamiltonian whose
    convexity constant is zero.
    """


class InvariantViolation(PathwiseError, RuntimeError):
    """
    an invariant which the discrete operators preserve exactly is broken.
    """


class ConjugateRangeWarning(UserWarning):
    """
    velocities outside the achievable chord-slope range have been clamped.
    """


#! FUNCTIONS


def get_files(path, extension="", check_subfolders=False):
    """
    list all the files having the required extension in the provided folder
    and its subfolders (if required).

    Parameters
    ----------
        path: str
            a directory where to look for the files.

        extension: str
            a str object defining the ending of the files that have to be
            listed.

        check_subfolders: bool
            if True, also the subfolders found in path are searched,
            otherwise only path is checked.

    Returns
    -------
        files: list
            the sorted list of the full paths of the files corresponding to
            the input criteria.
    """

    # output storer
    out = []

    # surf the path by the os.walk function
    for root, _, files in os.walk(path):
        for obj in files:
            if obj[-len(extension) :] == extension:
                out += [os.path.join(root, obj)]

        # handle the subfolders
        if not check_subfolders:
            break

    # sorting makes the listing independent of the file system order
    return sorted(out)


def get_time(tic=None, toc=None, as_string=True, compact=True):
    """
    get the days, hours, minutes and seconds between the two times.
    If only tic is provided, it is considered as the lapsed time.
    If neither tic nor toc are provided, the function returns the
    current time as float.

    Parameters
    ----------
        tic: float
            the starting time.

        toc: float
            the stopping time.

        as_string: bool
            should the output be returned as string?

        compact: bool
            if "as_string" is true, should the time be reported in a
            compact or in an extensive way?

    Returns
    -------
        If nothing is provided, the function returns the current time.
        If only tic is provided, the function returns the time value
        from it to now. If both tic and toc are provided, the function
        returns the time difference between them.
    """

    # check what to do
    if tic is None:
        return time.time()
    elif toc is None:
        tm = float(time.time() - tic)
    else:
        tm = float(toc - tic)

    # convert the time value in days, hours, minutes,
    # seconds and milliseconds
    d = int(np.floor(tm / 86400))
    tm -= d * 86400
    h = int(np.floor(tm / 3600))
    tm -= h * 3600
    m = int(np.floor(tm / 60))
    tm -= m * 60
    s = int(np.floor(tm))
    tm -= s
    ms = int(np.round(1000 * tm, 0))

    # report the calculated time
    if not as_string:
        return {
            "Days": d,
            "Hours": h,
            "Minutes": m,
            "Seconds": s,
            "Milliseconds": ms,
        }
    st = "{:0>2d}".format(d) + (" Days - " if not compact else ":")
    st += "{:0>2d}".format(h)
    st += " Hours - " if not compact else ":"
    st += "{:0>2d}".format(m)
    st += " Minutes - " if not compact else ":"
    st += "{:0>2d}".format(s)
    st += " Seconds - " if not compact else ":"
    st += "{:0>3d}".format(ms)
    st += " Milliseconds" if not compact else ""
    return st


def write_json(path, obj):
    """
    write obj to path as deterministic JSON (sorted keys, fixed indent).
    """
    with open(path, "w", encoding="utf-8") as buf:
        json.dump(obj, buf, sort_keys=True, indent=2)
        buf.write("\n")


def read_json(path):
    """
    read a JSON document.
    """
    assert os.path.exists(path), path + " does not exist."
    with open(path, "r", encoding="utf-8") as buf:
        return json.load(buf)
