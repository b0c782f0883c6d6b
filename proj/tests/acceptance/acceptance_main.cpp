// SPDX-License-Identifier: Apache-2.0
// placeholder, replaced by the full acceptance suite
#include <cstdio>
int main() { std::puts("acceptance placeholder"); return 1; }
