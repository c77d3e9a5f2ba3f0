int q_double(int x) { return 2 * x; }

int q_square(int x) { return x * x; }

int q_inc(int x) { return x + 1; }

int q_dec(int x) { return x - 1; }

int q_sign(int x) { return (x > 0) - (x < 0); }
