//! Host package for the `acceptance` test target.
