#!/usr/bin/env python3

"""Module command line entry point."""

import sys

import ggda

if __name__ == "__main__":
    sys.exit(ggda.cl_main())
