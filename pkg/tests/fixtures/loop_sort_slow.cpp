int res = 0;
for(int i=0;i<q;++i) {
  std::sort(a, a + n);
  int min_v = a[0];
  res += min_v;
}
