void stacked_region(int n, double *a, double *b) {
#pragma omp parallel
  {
    int tid = omp_get_thread_num();
#pragma omp for nowait
    for (int i = 0; i < n; i++) {
      a[i] = tid;
    }
#pragma omp for schedule(static, 4)
    for (int i = 0; i < n; i++) {
      b[i] = a[i] + 1;
    }
  }
}

void stacked_same_scope(int n, double *a) {
#pragma omp target
#pragma omp teams distribute parallel for
  for (int i = 0; i < n; i++) {
    a[i] = a[i] * a[i];
  }
}

void nested_braces(int n, int m, int **g) {
#pragma omp parallel for private(j)
  for (int i = 0; i < n; i++) {
    int j;
    for (j = 0; j < m; j++) {
      if (g[i][j] > 0) {
        { g[i][j] = -g[i][j]; }
      } else {
        g[i][j] = 0;
      }
    }
  }
}

void while_loop(int *head) {
  int *p = head;
#pragma omp parallel
  while (*p) {
    p++;
  }
}

void critical_block(int n, int *count) {
#pragma omp parallel for
  for (int i = 0; i < n; i++) {
#pragma omp critical
    {
      (*count)++;
    }
  }
}

void atomic_update(int n, int *hist, const int *key) {
#pragma omp parallel for
  for (int i = 0; i < n; i++) {
#pragma omp atomic
    hist[key[i]] += 1;
  }
}

void single_master(int n, double *x) {
#pragma omp parallel
  {
#pragma omp single
    { x[0] = 1.0; }
#pragma omp barrier
#pragma omp master
    x[1] = 2.0;
  }
}

void sections_demo(double *a, double *b) {
#pragma omp parallel sections
  {
#pragma omp section
    { a[0] = 1; }
#pragma omp section
    { b[0] = 2; }
  }
}

void tasks(int n, int *v) {
#pragma omp parallel
#pragma omp single
  for (int i = 0; i < n; i++) {
#pragma omp task firstprivate(i)
    v[i] = i * i;
  }
#pragma omp taskwait
  v[0] = 0;
}
