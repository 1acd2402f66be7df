void k(double *A, double *out) {
  double A[256];
  #pragma HLS ARRAY_PARTITION variable=A cyclic factor=2
  #pragma HLS PIPELINE
  #pragma HLS UNROLL factor=4
  for (int i = 0; i < 64; i++) {
    out[i] = A[i] * 2.0;
  }
}
