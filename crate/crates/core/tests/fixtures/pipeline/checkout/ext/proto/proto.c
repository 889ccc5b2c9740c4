#include "php.h"
#include "proto.h"

static const char *proto_state_name(int state)
{
    switch (state) {
        case PROTO_IDLE: return "idle";
        case PROTO_AUTHED: return "authed";
        default: return "other";
    }
}

int proto_handle_command(proto_conn *conn, int cmd)
{
    int next = conn->state;
    switch (cmd) {
        case CMD_HELLO:
            next = PROTO_GREETED;
            break;
        case CMD_AUTH:
            if (conn->state != PROTO_GREETED) {
                next = PROTO_IDLE;
                break;
            }
            next = PROTO_AUTHED;
            break;
        case CMD_DATA:
            next = PROTO_STREAMING;
            break;
        default:
            next = PROTO_IDLE;
            break;
    }
    conn->state = next;
    proto_log(conn, proto_state_name(next));
    return next == PROTO_IDLE ? FAILURE : SUCCESS;
}
