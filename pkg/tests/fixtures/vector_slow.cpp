int n; scanf("%d", &n);
std::vector<int> v;
for(int i=0;i<n;++i) {
  v.push_back(i*i);
}
